//! Box-constrained blending-weight fitting against registered target meshes.
//!
//! The tracking fit is the convex QP `min sum_x |n(x) + sum_i a_i S_i(x) - t(x)|^2`
//! over `a in [0,1]^N`, solved with a primal active-set method on the shape
//! Gram matrix. A Huber-loss variant (iteratively reweighted, same QP core)
//! serves the tuning stage of personalization.

pub mod box_qp;

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use box_qp::{solve_box_qp, BoxQpOptions, BoxQpSolution};

use crate::error::{Error, Result};
use crate::mesh::{distance, Mesh, Vec3};
use crate::personalize::huber;
use crate::rig::{blend_positions, BlendshapeRig, WeightVector};

/// `G_ij = sum_x S_i(x) . S_j(x)`.
#[derive(Debug, Clone)]
pub struct Gram {
    pub matrix: DMatrix<f64>,
}

impl Gram {
    pub fn build(shapes: &[Vec<Vec3>]) -> Self {
        let n = shapes.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if j < i {
                            return 0.0;
                        }
                        shapes[i]
                            .iter()
                            .zip(&shapes[j])
                            .map(|(a, b)| a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let matrix = DMatrix::from_fn(n, n, |i, j| if j >= i { rows[i][j] } else { rows[j][i] });
        Gram { matrix }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub weights: WeightVector,
    /// Mean per-vertex Euclidean distance, mesh units.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the frame could not be fitted at all (sequence fitting only).
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

fn check_target(rig: &BlendshapeRig, target: &Mesh) -> Result<()> {
    if target.vertex_count() != rig.vertex_count() {
        return Err(Error::dim("target vertices", rig.vertex_count(), target.vertex_count()));
    }
    Ok(())
}

/// `b_i = sum_x S_i(x) . (t(x) - n(x))`.
fn linear_term(rig: &BlendshapeRig, target: &Mesh) -> Vec<f64> {
    let n = rig.neutral().vertices();
    let t = target.vertices();
    rig.shapes()
        .iter()
        .map(|s| {
            s.iter()
                .zip(n.iter().zip(t))
                .map(|(d, (a, b))| d[0] * (b[0] - a[0]) + d[1] * (b[1] - a[1]) + d[2] * (b[2] - a[2]))
                .sum()
        })
        .collect()
}

pub fn solve_weights(
    rig: &BlendshapeRig,
    target: &Mesh,
    init: Option<&WeightVector>,
) -> Result<FitResult> {
    solve_weights_with(rig, target, init, &SolverOptions::default())
}

pub fn solve_weights_with(
    rig: &BlendshapeRig,
    target: &Mesh,
    init: Option<&WeightVector>,
    opts: &SolverOptions,
) -> Result<FitResult> {
    check_target(rig, target)?;
    let n = rig.shape_count();
    let x0 = match init {
        Some(w) if w.len() != n => return Err(Error::dim("initial weights", n, w.len())),
        Some(w) => w.as_slice().to_vec(),
        None => vec![0.0; n],
    };
    let gram = rig.gram();
    let b = linear_term(rig, target);
    let sol = solve_box_qp(
        &gram.matrix,
        &b,
        0.0,
        1.0,
        &x0,
        &BoxQpOptions {
            tol: opts.tol,
            max_iter: opts.max_iter,
        },
    );
    let weights = WeightVector::clamped(sol.x);
    let residual = reconstruction_error(rig, &weights, target)?;
    Ok(FitResult {
        weights,
        residual,
        iterations: sol.iterations,
        converged: sol.converged,
        error: None,
    })
}

/// Mean over vertices of the distance between the blended rig and `target`.
pub fn reconstruction_error(
    rig: &BlendshapeRig,
    weights: &WeightVector,
    target: &Mesh,
) -> Result<f64> {
    check_target(rig, target)?;
    if weights.len() != rig.shape_count() {
        return Err(Error::dim("weights", rig.shape_count(), weights.len()));
    }
    let p = blend_positions(rig, weights.as_slice());
    Ok(mean_distance(&p, target.vertices()))
}

pub(crate) fn mean_distance(a: &[Vec3], b: &[Vec3]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| distance(*x, *y)).sum::<f64>() / a.len() as f64
}

/// Per-vertex distances between the blended rig and `target`.
pub fn per_vertex_error(rig: &BlendshapeRig, weights: &WeightVector, target: &Mesh) -> Result<Vec<f64>> {
    check_target(rig, target)?;
    let p = blend_positions(rig, weights.as_slice());
    Ok(p.iter().zip(target.vertices()).map(|(x, y)| distance(*x, *y)).collect())
}

/// Fits frames in order, each warm-started from the previous frame's weights.
/// A frame that cannot be fitted is flagged and the sequence continues.
pub fn fit_sequence(rig: &BlendshapeRig, targets: &[Mesh]) -> Vec<FitResult> {
    fit_sequence_with(rig, targets, None, &SolverOptions::default())
}

pub fn fit_sequence_with(
    rig: &BlendshapeRig,
    targets: &[Mesh],
    init: Option<&WeightVector>,
    opts: &SolverOptions,
) -> Vec<FitResult> {
    let mut warm = init
        .cloned()
        .unwrap_or_else(|| WeightVector::zeros(rig.shape_count()));
    let mut out = Vec::with_capacity(targets.len());
    for t in targets {
        match solve_weights_with(rig, t, Some(&warm), opts) {
            Ok(fit) => {
                warm = fit.weights.clone();
                out.push(fit);
            }
            Err(e) => out.push(FitResult {
                weights: warm.clone(),
                residual: f64::INFINITY,
                iterations: 0,
                converged: false,
                error: Some(e.to_string()),
            }),
        }
    }
    out
}

/// Huber-smoothed L1 reconstruction loss of a blend against a target,
/// summed over vertices and coordinates.
pub fn robust_loss(rig: &BlendshapeRig, alpha: &[f64], target: &Mesh, delta: f64) -> f64 {
    let p = blend_positions(rig, alpha);
    p.iter()
        .zip(target.vertices())
        .map(|(a, b)| (0..3).map(|c| huber::value(a[c] - b[c], delta)).sum::<f64>())
        .sum()
}

#[derive(Debug, Clone)]
pub struct RobustFit {
    pub weights: WeightVector,
    pub loss: f64,
    pub iterations: usize,
}

/// Box-constrained weights minimizing the Huber-smoothed L1 reconstruction
/// loss. Each step minimizes the quadratic majorizer of the Huber loss at the
/// current residuals exactly, so the loss never increases.
pub fn solve_weights_robust(
    rig: &BlendshapeRig,
    target: &Mesh,
    init: &WeightVector,
    delta: f64,
    max_iter: usize,
    tol: f64,
) -> Result<RobustFit> {
    check_target(rig, target)?;
    let n = rig.shape_count();
    if init.len() != n {
        return Err(Error::dim("initial weights", n, init.len()));
    }
    // sparse rows: for every (vertex, coordinate) the shapes that move it
    let neutral = rig.neutral().vertices();
    let tv = target.vertices();
    let mut rows: Vec<(f64, Vec<(usize, f64)>)> = Vec::with_capacity(neutral.len() * 3);
    for x in 0..neutral.len() {
        for c in 0..3 {
            let entries: Vec<(usize, f64)> = rig
                .shapes()
                .iter()
                .enumerate()
                .filter_map(|(i, s)| (s[x][c] != 0.0).then_some((i, s[x][c])))
                .collect();
            rows.push((tv[x][c] - neutral[x][c], entries));
        }
    }
    let residual = |alpha: &[f64], row: &(f64, Vec<(usize, f64)>)| {
        row.1.iter().map(|&(i, s)| alpha[i] * s).sum::<f64>() - row.0
    };
    let loss_of = |alpha: &[f64]| -> f64 {
        rows.iter()
            .map(|r| huber::value(residual(alpha, r), delta))
            .sum()
    };

    let mut alpha = init.as_slice().to_vec();
    let mut loss = loss_of(&alpha);
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut h = DMatrix::<f64>::zeros(n, n);
        let mut b = vec![0.0; n];
        for row in &rows {
            let r = residual(&alpha, row);
            let w = huber::majorizer_weight(r, delta);
            for &(i, si) in &row.1 {
                b[i] += w * si * row.0;
                for &(j, sj) in &row.1 {
                    h[(i, j)] += w * si * sj;
                }
            }
        }
        let sol = solve_box_qp(&h, &b, 0.0, 1.0, &alpha, &BoxQpOptions::default());
        let next_loss = loss_of(&sol.x);
        if next_loss > loss {
            break;
        }
        let decrease = loss - next_loss;
        alpha = sol.x;
        loss = next_loss;
        if decrease <= tol * loss.max(1e-300) {
            break;
        }
    }
    Ok(RobustFit {
        weights: WeightVector::clamped(alpha),
        loss,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::grid_mesh;
    use crate::rig::synthesize_expression;
    use std::collections::BTreeSet;

    fn rig3() -> BlendshapeRig {
        let n = grid_mesh("n", 4, 4, [0.1, 0.1], [0.9, 0.9], |u, v| [u, v, 0.0]).unwrap();
        let shapes: Vec<Vec<Vec3>> = (0..3)
            .map(|k| {
                (0..16)
                    .map(|i| {
                        let t = i as f64 + k as f64 * 1.7;
                        [t.sin() * 0.1, (t * 0.7).cos() * 0.05, 0.02 * k as f64]
                    })
                    .collect()
            })
            .collect();
        BlendshapeRig::new(n, shapes, vec!["a".into(), "b".into(), "c".into()], BTreeSet::new()).unwrap()
    }

    #[test]
    fn neutral_target_gives_zero_weights() {
        let rig = rig3();
        let fit = solve_weights(&rig, rig.neutral(), None).unwrap();
        assert_eq!(fit.weights.as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(fit.residual, 0.0);
        assert!(fit.converged);
    }

    #[test]
    fn uniform_offset_error_equals_distance() {
        let rig = rig3();
        let t = rig.neutral().transformed(|p| [p[0] + 0.25, p[1], p[2]]);
        let e = reconstruction_error(&rig, &WeightVector::zeros(3), &t).unwrap();
        assert!((e - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mismatched_target_rejected() {
        let rig = rig3();
        let other = grid_mesh("o", 3, 3, [0.1, 0.1], [0.9, 0.9], |u, v| [u, v, 0.0]).unwrap();
        assert!(matches!(solve_weights(&rig, &other, None), Err(Error::Dimension { .. })));
    }

    #[test]
    fn robust_fit_recovers_exact_weights() {
        let rig = rig3();
        let w = WeightVector::new(vec![0.3, 0.9, 0.0]).unwrap();
        let t = synthesize_expression(&rig, &w).unwrap();
        let fit = solve_weights_robust(&rig, &t, &WeightVector::new(vec![1.0, 0.0, 1.0]).unwrap(), 1e-4, 200, 1e-12).unwrap();
        for (a, b) in fit.weights.as_slice().iter().zip(w.as_slice()) {
            assert!((a - b).abs() < 1e-3, "{:?}", fit.weights);
        }
    }

    #[test]
    fn bad_frame_does_not_abort_sequence() {
        let rig = rig3();
        let other = grid_mesh("o", 3, 3, [0.1, 0.1], [0.9, 0.9], |u, v| [u, v, 0.0]).unwrap();
        let frames = vec![rig.neutral().clone(), other, rig.neutral().clone()];
        let fits = fit_sequence(&rig, &frames);
        assert_eq!(fits.len(), 3);
        assert!(fits[0].error.is_none());
        assert!(fits[1].error.is_some());
        assert!(fits[2].error.is_none() && fits[2].converged);
    }
}
