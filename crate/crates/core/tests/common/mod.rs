#![allow(dead_code)]

use std::collections::BTreeSet;

use facerig::mesh::{grid_mesh, Vec3};
use facerig::personalize::SubjectScans;
use facerig::rig::{FacsExpression, FacsSpec, WeightVector};
use facerig::{BlendshapeRig, Mesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gently curved `nx` x `ny` grid over UV [0.05, 0.95].
pub fn curved_grid(nx: usize, ny: usize) -> Mesh {
    grid_mesh("grid", nx, ny, [0.05, 0.05], [0.95, 0.95], |u, v| {
        [u, v, 0.1 * (u - 0.5) * (u - 0.5) + 0.05 * v]
    })
    .unwrap()
}

/// Smooth random displacement: a sum of a few Gaussian bumps with random
/// vector amplitudes, plus a small random constant so no vertex is exactly
/// zero.
pub fn smooth_shape(mesh: &Mesh, r: &mut ChaCha8Rng, scale: f64) -> Vec<Vec3> {
    let bumps: Vec<([f64; 2], f64, Vec3)> = (0..3)
        .map(|_| {
            (
                [r.random_range(0.1..0.9), r.random_range(0.1..0.9)],
                r.random_range(0.1..0.3),
                [
                    r.random_range(-1.0..1.0),
                    r.random_range(-1.0..1.0),
                    r.random_range(-1.0..1.0),
                ],
            )
        })
        .collect();
    let base: Vec3 = [r.random_range(0.01..0.05), r.random_range(0.01..0.05), r.random_range(0.01..0.05)];
    mesh.uvs()
        .iter()
        .map(|uv| {
            let mut d = base;
            for (c, s, a) in &bumps {
                let q = ((uv[0] - c[0]).powi(2) + (uv[1] - c[1]).powi(2)) / (s * s);
                let w = (-q).exp();
                for k in 0..3 {
                    d[k] += w * a[k];
                }
            }
            d.map(|x| x * scale)
        })
        .collect()
}

pub fn random_rig(nx: usize, ny: usize, shapes: usize, seed: u64) -> BlendshapeRig {
    let mesh = curved_grid(nx, ny);
    let mut r = rng(seed);
    let s = (0..shapes).map(|_| smooth_shape(&mesh, &mut r, 0.05)).collect();
    let names = (0..shapes).map(|i| format!("shape{i}")).collect();
    BlendshapeRig::new(mesh, s, names, BTreeSet::new()).unwrap()
}

/// Independent blend summation: `n(x) + sum_i a_i S_i(x)`, one vertex at
/// a time, shapes in index order.
pub fn naive_blend(rig: &BlendshapeRig, alpha: &[f64]) -> Vec<Vec3> {
    let mut out = Vec::new();
    for x in 0..rig.vertex_count() {
        let mut p = rig.neutral().vertices()[x];
        for i in 0..rig.shape_count() {
            for c in 0..3 {
                p[c] += alpha[i] * rig.shape(i)[x][c];
            }
        }
        out.push(p);
    }
    out
}

pub fn naive_mesh(rig: &BlendshapeRig, alpha: &[f64]) -> Mesh {
    rig.neutral().with_positions(naive_blend(rig, alpha)).unwrap()
}

/// Mean Euclidean distance by a plain double loop.
pub fn naive_error(a: &[Vec3], b: &[Vec3]) -> f64 {
    let mut total = 0.0;
    for x in 0..a.len() {
        let mut s = 0.0;
        for c in 0..3 {
            s += (a[x][c] - b[x][c]) * (a[x][c] - b[x][c]);
        }
        total += s.sqrt();
    }
    total / a.len() as f64
}

pub fn binary(n: usize, active: &[usize]) -> WeightVector {
    let mut w = vec![0.0; n];
    for &i in active {
        w[i] = 1.0;
    }
    WeightVector::new(w).unwrap()
}

/// FACS list in which expression `k` activates shapes `k` and `(k+1) % n`,
/// plus one single-shape expression per shape, so every shape is covered.
pub fn covering_facs(n: usize) -> FacsSpec {
    let mut e = Vec::new();
    for k in 0..n {
        e.push(FacsExpression {
            name: format!("single{k}"),
            weights: binary(n, &[k]),
        });
    }
    for k in 0..n {
        e.push(FacsExpression {
            name: format!("pair{k}"),
            weights: binary(n, &[k, (k + 1) % n]),
        });
    }
    FacsSpec::new(e).unwrap()
}

/// Scans of `truth` under the given weights (defaults to the FACS binaries).
pub fn scans_from(truth: &BlendshapeRig, facs: &FacsSpec, weights: Option<&[Vec<f64>]>) -> SubjectScans {
    let meshes = facs
        .expressions()
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let w = weights.map(|w| w[k].clone()).unwrap_or_else(|| e.weights.as_slice().to_vec());
            naive_mesh(truth, &w)
        })
        .collect();
    SubjectScans::new(truth.neutral().clone(), meshes, facs.clone()).unwrap()
}

/// A smooth, known deformation of a rig: neutral and every shape get a
/// low-frequency perturbation.
pub fn perturbed_rig(template: &BlendshapeRig, seed: u64, amount: f64) -> BlendshapeRig {
    let mut r = rng(seed);
    let neutral_delta = smooth_shape(template.neutral(), &mut r, amount);
    let neutral: Vec<Vec3> = template
        .neutral()
        .vertices()
        .iter()
        .zip(&neutral_delta)
        .map(|(p, d)| [p[0] + d[0], p[1] + d[1], p[2] + d[2]])
        .collect();
    let shapes = template
        .shapes()
        .iter()
        .map(|s| {
            let d = smooth_shape(template.neutral(), &mut r, amount);
            s.iter()
                .zip(&d)
                .map(|(a, b)| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
                .collect()
        })
        .collect();
    BlendshapeRig::new(
        template.neutral().with_positions(neutral).unwrap(),
        shapes,
        template.names().to_vec(),
        template.extreme_set().clone(),
    )
    .unwrap()
}
