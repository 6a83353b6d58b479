//! Primal active-set solver for `min 0.5 x'Hx - b'x` subject to `lo <= x <= hi`
//! with `H` symmetric positive semidefinite.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct BoxQpOptions {
    /// Tolerance on the infinity norm of the projected gradient, relative to
    /// `max(1, |b|_inf, max_i H_ii)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BoxQpOptions {
    fn default() -> Self {
        BoxQpOptions {
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoxQpSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Infinity norm of the projected gradient at `x`.
    pub projected_gradient: f64,
}

pub fn gradient(h: &DMatrix<f64>, b: &[f64], x: &[f64]) -> Vec<f64> {
    let n = b.len();
    (0..n)
        .map(|i| (0..n).map(|j| h[(i, j)] * x[j]).sum::<f64>() - b[i])
        .collect()
}

pub fn projected_gradient_norm(g: &[f64], x: &[f64], lo: f64, hi: f64) -> f64 {
    g.iter()
        .zip(x)
        .map(|(&gi, &xi)| {
            if (xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0) {
                0.0
            } else {
                gi.abs()
            }
        })
        .fold(0.0, f64::max)
}

pub fn objective(h: &DMatrix<f64>, b: &[f64], x: &[f64]) -> f64 {
    let n = b.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += x[i] * h[(i, j)] * x[j];
        }
    }
    0.5 * quad - b.iter().zip(x).map(|(bi, xi)| bi * xi).sum::<f64>()
}

/// Solves `H_FF d = rhs`, adding a growing ridge when `H_FF` is singular.
fn solve_free(h: &DMatrix<f64>, free: &[usize], rhs: &[f64]) -> Vec<f64> {
    let k = free.len();
    let sub = DMatrix::from_fn(k, k, |a, c| h[(free[a], free[c])]);
    let r = DVector::from_column_slice(rhs);
    let scale = (0..k).map(|a| sub[(a, a)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut m = sub.clone();
        for a in 0..k {
            m[(a, a)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(&r);
            if d.iter().all(|v| v.is_finite()) {
                return d.iter().copied().collect();
            }
        }
        ridge = if ridge == 0.0 { 1e-12 * scale } else { ridge * 100.0 };
    }
    // steepest descent as a last resort
    rhs.iter().map(|v| v / scale).collect()
}

pub fn solve_box_qp(
    h: &DMatrix<f64>,
    b: &[f64],
    lo: f64,
    hi: f64,
    x0: &[f64],
    opts: &BoxQpOptions,
) -> BoxQpSolution {
    let n = b.len();
    let diag_max = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max);
    let b_max = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = opts.tol * 1f64.max(diag_max).max(b_max);

    let mut x: Vec<f64> = x0.iter().map(|v| v.clamp(lo, hi)).collect();
    let g = gradient(h, b, &x);
    let mut fixed: Vec<bool> = (0..n)
        .map(|i| (x[i] <= lo && g[i] > 0.0) || (x[i] >= hi && g[i] < 0.0))
        .collect();

    let mut iterations = 0;
    loop {
        let g = gradient(h, b, &x);
        let pg = projected_gradient_norm(&g, &x, lo, hi);
        if pg <= tol {
            return BoxQpSolution {
                x,
                iterations,
                converged: true,
                projected_gradient: pg,
            };
        }
        if iterations >= opts.max_iter {
            return BoxQpSolution {
                x,
                iterations,
                converged: false,
                projected_gradient: pg,
            };
        }
        iterations += 1;

        let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
        let free_grad = free.iter().map(|&i| g[i].abs()).fold(0.0, f64::max);
        if !free.is_empty() && free_grad > tol {
            let rhs: Vec<f64> = free.iter().map(|&i| -g[i]).collect();
            let d = solve_free(h, &free, &rhs);
            let mut step = 1.0;
            let mut blocking = None;
            for (k, &i) in free.iter().enumerate() {
                let limit = if d[k] < 0.0 {
                    (x[i] - lo) / -d[k]
                } else if d[k] > 0.0 {
                    (hi - x[i]) / d[k]
                } else {
                    f64::INFINITY
                };
                if limit < step {
                    step = limit;
                    blocking = Some(i);
                }
            }
            for (k, &i) in free.iter().enumerate() {
                x[i] = (x[i] + step * d[k]).clamp(lo, hi);
            }
            if let Some(i) = blocking {
                x[i] = if d[free.iter().position(|&f| f == i).unwrap()] < 0.0 {
                    lo
                } else {
                    hi
                };
                fixed[i] = true;
            }
            continue;
        }

        // subspace optimum: release the bound with the most violated multiplier
        let release = (0..n)
            .filter(|&i| fixed[i])
            .filter(|&i| (x[i] <= lo && g[i] < 0.0) || (x[i] >= hi && g[i] > 0.0))
            .max_by(|&a, &c| g[a].abs().total_cmp(&g[c].abs()));
        match release {
            Some(i) => fixed[i] = false,
            None => {
                // fixed set is consistent, the free gradient is what remains
                for i in 0..n {
                    fixed[i] = (x[i] <= lo && g[i] > 0.0) || (x[i] >= hi && g[i] < 0.0);
                }
            }
        }
    }
}
