//! Full (all-vertex) objectives of both stages with analytic gradients.
//! The stage solvers work block by block; these evaluate the same sums in
//! one pass and are what gradient checks and reports use.

use super::huber;
use super::regularizer::RegularizerWeights;
use super::{OptimConfig, SubjectScans};
use crate::error::{Error, Result};
use crate::mesh::Vec3;
use crate::rig::{BlendshapeRig, Displacement, OffsetSet};

fn effective_shapes(template: &BlendshapeRig, layers: &[&OffsetSet]) -> Result<Vec<Displacement>> {
    let n = template.shape_count();
    let v = template.vertex_count();
    for l in layers {
        if l.shape_count() != n {
            return Err(Error::dim("offset shape count", n, l.shape_count()));
        }
        if let Some(d) = l.deltas.iter().find(|d| d.len() != v) {
            return Err(Error::dim("offset vertex count", v, d.len()));
        }
    }
    Ok((0..n)
        .map(|i| {
            (0..v)
                .map(|x| {
                    let mut s = template.shape(i)[x];
                    for l in layers {
                        for c in 0..3 {
                            s[c] += l.deltas[i][x][c];
                        }
                    }
                    s
                })
                .collect()
        })
        .collect())
}

/// Residuals `neutral + sum_i alpha_i shapes_i - target`, per vertex.
fn residuals(neutral: &[Vec3], shapes: &[Displacement], alpha: &[f64], target: &[Vec3]) -> Vec<Vec3> {
    (0..neutral.len())
        .map(|x| {
            let mut r = neutral[x];
            for (a, s) in alpha.iter().zip(shapes) {
                for c in 0..3 {
                    r[c] += a * s[x][c];
                }
            }
            for c in 0..3 {
                r[c] -= target[x][c];
            }
            r
        })
        .collect()
}

fn check_weights(weights: &[Vec<f64>], scans: &SubjectScans, n: usize) -> Result<()> {
    if weights.len() != scans.expressions.len() {
        return Err(Error::dim("per-scan weights", scans.expressions.len(), weights.len()));
    }
    if let Some(w) = weights.iter().find(|w| w.len() != n) {
        return Err(Error::dim("weights", n, w.len()));
    }
    Ok(())
}

fn facs_weights(scans: &SubjectScans) -> Vec<Vec<f64>> {
    scans
        .facs
        .expressions()
        .iter()
        .map(|e| e.weights.as_slice().to_vec())
        .collect()
}

/// Data term summed over scans, vertices and coordinates.
pub fn reconstruction_loss(
    neutral: &[Vec3],
    shapes: &[Displacement],
    weights: &[Vec<f64>],
    scans: &SubjectScans,
    delta: f64,
) -> f64 {
    let mut total = 0.0;
    for (alpha, scan) in weights.iter().zip(&scans.expressions) {
        for r in residuals(neutral, shapes, alpha, scan.vertices()) {
            for c in r {
                total += huber::value(c, delta);
            }
        }
    }
    total
}

/// Estimation objective `L_rec + omega_reg * L_reg` at offsets `offsets`,
/// with the FACS binaries as weights and the subject neutral as base.
pub fn estimation_objective(
    template: &BlendshapeRig,
    scans: &SubjectScans,
    offsets: &OffsetSet,
    reg: &RegularizerWeights,
    cfg: &OptimConfig,
) -> Result<f64> {
    let shapes = effective_shapes(template, &[offsets])?;
    let data = reconstruction_loss(
        scans.neutral.vertices(),
        &shapes,
        &facs_weights(scans),
        scans,
        cfg.huber_delta,
    );
    let mut penalty = 0.0;
    for (i, d) in offsets.deltas.iter().enumerate() {
        for (x, v) in d.iter().enumerate() {
            let w = reg.weight(i, x);
            for c in v {
                penalty += w * huber::value(*c, cfg.huber_delta);
            }
        }
    }
    Ok(data + cfg.omega_reg * penalty)
}

pub fn estimation_gradient(
    template: &BlendshapeRig,
    scans: &SubjectScans,
    offsets: &OffsetSet,
    reg: &RegularizerWeights,
    cfg: &OptimConfig,
) -> Result<OffsetSet> {
    let shapes = effective_shapes(template, &[offsets])?;
    let delta = cfg.huber_delta;
    let mut grad = OffsetSet::zeros(template.shape_count(), template.vertex_count());
    for (alpha, scan) in facs_weights(scans).iter().zip(&scans.expressions) {
        let r = residuals(scans.neutral.vertices(), &shapes, alpha, scan.vertices());
        for (i, a) in alpha.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (x, rx) in r.iter().enumerate() {
                for c in 0..3 {
                    grad.deltas[i][x][c] += a * huber::derivative(rx[c], delta);
                }
            }
        }
    }
    for (i, d) in offsets.deltas.iter().enumerate() {
        for (x, v) in d.iter().enumerate() {
            let w = cfg.omega_reg * reg.weight(i, x);
            for c in 0..3 {
                grad.deltas[i][x][c] += w * huber::derivative(v[c], delta);
            }
        }
    }
    Ok(grad)
}

/// Tuning objective `L_rec + omega_reg_ft * sum |correction|` where the
/// shapes are `template + initial + correction` and `weights` are free.
pub fn tuning_objective(
    template: &BlendshapeRig,
    initial: &OffsetSet,
    correction: &OffsetSet,
    weights: &[Vec<f64>],
    scans: &SubjectScans,
    cfg: &OptimConfig,
) -> Result<f64> {
    check_weights(weights, scans, template.shape_count())?;
    let shapes = effective_shapes(template, &[initial, correction])?;
    let data = reconstruction_loss(scans.neutral.vertices(), &shapes, weights, scans, cfg.huber_delta);
    let penalty: f64 = correction
        .deltas
        .iter()
        .flatten()
        .flatten()
        .map(|c| huber::value(*c, cfg.huber_delta))
        .sum();
    Ok(data + cfg.omega_reg_ft * penalty)
}

/// Gradient of [`tuning_objective`] with respect to the correction and to
/// every scan's weights.
pub fn tuning_gradient(
    template: &BlendshapeRig,
    initial: &OffsetSet,
    correction: &OffsetSet,
    weights: &[Vec<f64>],
    scans: &SubjectScans,
    cfg: &OptimConfig,
) -> Result<(OffsetSet, Vec<Vec<f64>>)> {
    check_weights(weights, scans, template.shape_count())?;
    let shapes = effective_shapes(template, &[initial, correction])?;
    let delta = cfg.huber_delta;
    let mut g_corr = OffsetSet::zeros(template.shape_count(), template.vertex_count());
    let mut g_alpha = Vec::with_capacity(weights.len());
    for (alpha, scan) in weights.iter().zip(&scans.expressions) {
        let r = residuals(scans.neutral.vertices(), &shapes, alpha, scan.vertices());
        let d: Vec<Vec3> = r
            .iter()
            .map(|rx| rx.map(|c| huber::derivative(c, delta)))
            .collect();
        let mut ga = vec![0.0; alpha.len()];
        for (i, a) in alpha.iter().enumerate() {
            for (x, dx) in d.iter().enumerate() {
                for c in 0..3 {
                    g_corr.deltas[i][x][c] += a * dx[c];
                    ga[i] += dx[c] * shapes[i][x][c];
                }
            }
        }
        g_alpha.push(ga);
    }
    for (g, c) in g_corr
        .deltas
        .iter_mut()
        .flatten()
        .zip(correction.deltas.iter().flatten())
    {
        for k in 0..3 {
            g[k] += cfg.omega_reg_ft * huber::derivative(c[k], delta);
        }
    }
    Ok((g_corr, g_alpha))
}
