//! Solver for one vertex-coordinate block:
//!
//! `min_d  sum_k H(a_k . d - y_k) + sum_i lambda_i H(d_i)`
//!
//! where `H` is the Huber-smoothed absolute value. Damped Newton with
//! backtracking; when Newton fails to decrease the objective the step falls
//! back to the exact minimizer of the Huber majorizer, which always does.

use nalgebra::{DMatrix, DVector};

use super::huber;

#[derive(Debug, Clone)]
pub struct BlockProblem<'a> {
    /// Row-major `rows x cols` design matrix.
    pub a: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub y: &'a [f64],
    pub lambda: &'a [f64],
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct BlockSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BlockProblem<'_> {
    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|k| {
                let row = &self.a[k * self.cols..(k + 1) * self.cols];
                row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - self.y[k]
            })
            .collect()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let data: f64 = self
            .residuals(x)
            .iter()
            .map(|&r| huber::value(r, self.delta))
            .sum();
        let reg: f64 = x
            .iter()
            .zip(self.lambda)
            .map(|(&d, &l)| l * huber::value(d, self.delta))
            .sum();
        data + reg
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = self.residuals(x);
        let mut g: Vec<f64> = x
            .iter()
            .zip(self.lambda)
            .map(|(&d, &l)| l * huber::derivative(d, self.delta))
            .collect();
        for (k, rk) in r.iter().enumerate() {
            let s = huber::derivative(*rk, self.delta);
            if s == 0.0 {
                continue;
            }
            let row = &self.a[k * self.cols..(k + 1) * self.cols];
            for (gi, ai) in g.iter_mut().zip(row) {
                *gi += s * ai;
            }
        }
        g
    }

    /// `A' W A + diag(reg)` with per-row weights `w`.
    fn normal_matrix(&self, w: &[f64], reg: &[f64]) -> DMatrix<f64> {
        let n = self.cols;
        let mut h = DMatrix::from_diagonal(&DVector::from_column_slice(reg));
        for (k, &wk) in w.iter().enumerate() {
            if wk == 0.0 {
                continue;
            }
            let row = &self.a[k * n..(k + 1) * n];
            for i in 0..n {
                if row[i] == 0.0 {
                    continue;
                }
                let s = wk * row[i];
                for j in i..n {
                    h[(i, j)] += s * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                h[(i, j)] = h[(j, i)];
            }
        }
        h
    }

    fn majorizer_step(&self, x: &[f64]) -> Option<Vec<f64>> {
        let r = self.residuals(x);
        let w: Vec<f64> = r
            .iter()
            .map(|&rk| huber::majorizer_weight(rk, self.delta))
            .collect();
        let reg: Vec<f64> = x
            .iter()
            .zip(self.lambda)
            .map(|(&d, &l)| l * huber::majorizer_weight(d, self.delta))
            .collect();
        let h = self.normal_matrix(&w, &reg);
        let mut rhs = vec![0.0; self.cols];
        for (k, wk) in w.iter().enumerate() {
            let row = &self.a[k * self.cols..(k + 1) * self.cols];
            for (ri, ai) in rhs.iter_mut().zip(row) {
                *ri += wk * ai * self.y[k];
            }
        }
        solve_spd(h, &rhs)
    }

    fn newton_direction(&self, x: &[f64], g: &[f64]) -> Option<Vec<f64>> {
        let r = self.residuals(x);
        let w: Vec<f64> = r
            .iter()
            .map(|&rk| huber::second_derivative(rk, self.delta))
            .collect();
        let reg: Vec<f64> = x
            .iter()
            .zip(self.lambda)
            .map(|(&d, &l)| l * huber::second_derivative(d, self.delta))
            .collect();
        let mut h = self.normal_matrix(&w, &reg);
        let scale = (0..self.cols).map(|i| h[(i, i)]).fold(0.0, f64::max);
        if scale <= 0.0 {
            return None;
        }
        for i in 0..self.cols {
            h[(i, i)] += 1e-10 * scale;
        }
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        solve_spd(h, &neg)
    }

    pub fn solve(&self, x0: &[f64], max_iter: usize, tol: f64) -> BlockSolution {
        let mut x = x0.to_vec();
        let mut f = self.objective(&x);
        let mut converged = false;
        let mut iterations = 0;
        while iterations < max_iter {
            iterations += 1;
            let g = self.gradient(&x);
            let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if gnorm <= 1e-14 {
                converged = true;
                break;
            }
            let mut next = None;
            if let Some(d) = self.newton_direction(&x, &g) {
                let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
                if slope < 0.0 {
                    let mut t = 1.0;
                    for _ in 0..8 {
                        let cand: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                        let fc = self.objective(&cand);
                        if fc <= f + 1e-4 * t * slope {
                            next = Some((cand, fc));
                            break;
                        }
                        t *= 0.5;
                    }
                }
            }
            if next.is_none() {
                if let Some(cand) = self.majorizer_step(&x) {
                    let fc = self.objective(&cand);
                    if fc <= f {
                        next = Some((cand, fc));
                    }
                }
            }
            let Some((cand, fc)) = next else {
                converged = true;
                break;
            };
            let decrease = f - fc;
            x = cand;
            f = fc;
            if decrease <= tol * f.max(1e-300) {
                converged = true;
                break;
            }
        }
        BlockSolution {
            x,
            objective: f,
            iterations,
            converged,
        }
    }
}

fn solve_spd(h: DMatrix<f64>, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let r = DVector::from_column_slice(rhs);
    if let Some(ch) = h.clone().cholesky() {
        let s = ch.solve(&r);
        if s.iter().all(|v| v.is_finite()) {
            return Some(s.iter().copied().collect());
        }
    }
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut m = h;
    for i in 0..n {
        m[(i, i)] += 1e-9 * scale;
    }
    let s = m.cholesky()?.solve(&r);
    s.iter().all(|v| v.is_finite()).then(|| s.iter().copied().collect())
}
