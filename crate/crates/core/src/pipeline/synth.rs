//! Procedural template rig and seeded synthetic subjects with known ground truth.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{cross, dot, grid_mesh, sub, Mesh, Vec3};
use crate::personalize::SubjectScans;
use crate::rig::{
    default_extreme_names, default_shape_names, synthesize_expression, BlendshapeRig, Displacement, FacsExpression,
    FacsSpec, WeightVector,
};

/// Wendland C2 kernel, 1 at the center and exactly 0 beyond radius 1.
pub fn wendland(t: f64) -> f64 {
    if t >= 1.0 {
        0.0
    } else {
        let a = 1.0 - t;
        a * a * a * a * (4.0 * t + 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSpec {
    /// Vertices per side of the face grid.
    pub grid: usize,
    pub names: Vec<String>,
    pub extreme: Vec<String>,
    pub seed: u64,
}

impl Default for TemplateSpec {
    fn default() -> Self {
        TemplateSpec {
            grid: 16,
            names: default_shape_names(),
            extreme: default_extreme_names(),
            seed: 7,
        }
    }
}

/// Nominal UV center of a shape from its name; unknown names get `None`.
fn region_center(name: &str) -> Option<[f64; 2]> {
    let side = if name.ends_with("Left") {
        -1.0
    } else if name.ends_with("Right") {
        1.0
    } else {
        0.0
    };
    let (du, v) = if name.starts_with("eye") {
        (0.2, 0.64)
    } else if name.starts_with("brow") {
        (if name.contains("Inner") { 0.08 } else { 0.22 }, 0.8)
    } else if name.starts_with("jaw") {
        (0.12, 0.14)
    } else if name.starts_with("mouth") || name.starts_with("tongue") {
        (0.12, 0.3)
    } else if name.starts_with("cheek") {
        (0.24, 0.46)
    } else if name.starts_with("nose") {
        (0.07, 0.52)
    } else {
        return None;
    };
    Some([0.5 + side * du, v])
}

fn neutral_height(u: f64, v: f64) -> f64 {
    let x = 2.0 * (u - 0.5);
    let y = 2.0 * (v - 0.5);
    0.35 * (1.0 - 0.5 * x * x - 0.3 * y * y) + 0.06 * (-((x * x) + (y - 0.1) * (y - 0.1)) * 12.0).exp()
}

/// Face-like height-field grid with compact radial-basis blendshapes placed
/// by name region. Shapes flagged extreme move twice as far.
pub fn procedural_template(spec: &TemplateSpec) -> Result<BlendshapeRig> {
    let neutral = grid_mesh("template", spec.grid, spec.grid, [0.02, 0.02], [0.98, 0.98], |u, v| {
        [u - 0.5, v - 0.5, neutral_height(u, v)]
    })?;
    let extreme: BTreeSet<usize> = spec
        .extreme
        .iter()
        .filter_map(|n| spec.names.iter().position(|m| m == n))
        .collect();
    let spacing = 0.96 / (spec.grid - 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut shapes: Vec<Displacement> = Vec::with_capacity(spec.names.len());
    for (i, name) in spec.names.iter().enumerate() {
        let nominal = region_center(name).unwrap_or_else(|| [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)]);
        let center = [
            (nominal[0] + rng.random_range(-0.04..0.04)).clamp(0.1, 0.9),
            (nominal[1] + rng.random_range(-0.04..0.04)).clamp(0.1, 0.9),
        ];
        let radius = rng.random_range(0.16..0.26f64).max(3.0 * spacing);
        let scale = if extreme.contains(&i) { 2.0 } else { 1.0 };
        let amp = scale * rng.random_range(0.025..0.05);
        let mut dir = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-0.6..0.6),
        ];
        let len = dir.iter().map(|d: &f64| d * d).sum::<f64>().sqrt().max(1e-3);
        dir = dir.map(|d| d / len);
        // radial part: negative pulls skin toward the center (compression)
        let radial = rng.random_range(-0.6..0.6);
        let shape = neutral
            .uvs()
            .iter()
            .map(|uv| {
                let du = uv[0] - center[0];
                let dv = uv[1] - center[1];
                let w = wendland((du * du + dv * dv).sqrt() / radius);
                if w == 0.0 {
                    return [0.0; 3];
                }
                [
                    amp * w * dir[0] + radial * amp * w * du / radius,
                    amp * w * dir[1] + radial * amp * w * dv / radius,
                    amp * w * dir[2],
                ]
            })
            .collect();
        shapes.push(shape);
    }
    BlendshapeRig::new(neutral, shapes, spec.names.clone(), extreme)
}

/// Twenty-six FACS-style expressions over the default names.
pub fn default_facs_entries() -> Vec<(&'static str, Vec<&'static str>)> {
    vec![
        ("blink", vec!["eyeBlinkLeft", "eyeBlinkRight"]),
        ("lookDown", vec!["eyeLookDownLeft", "eyeLookDownRight"]),
        ("lookLeft", vec!["eyeLookOutLeft", "eyeLookInRight"]),
        ("lookRight", vec!["eyeLookInLeft", "eyeLookOutRight"]),
        ("lookUp", vec!["eyeLookUpLeft", "eyeLookUpRight"]),
        ("squint", vec!["eyeSquintLeft", "eyeSquintRight", "cheekSquintLeft", "cheekSquintRight"]),
        ("eyesWide", vec!["eyeWideLeft", "eyeWideRight", "browOuterUpLeft", "browOuterUpRight"]),
        ("browsDown", vec!["browDownLeft", "browDownRight"]),
        ("browsInnerUp", vec!["browInnerUpLeft", "browInnerUpRight"]),
        ("jawOpen", vec!["jawOpen"]),
        ("jawForward", vec!["jawForward"]),
        ("jawLeft", vec!["jawLeft", "mouthLeft"]),
        ("jawRight", vec!["jawRight", "mouthRight"]),
        ("mouthClose", vec!["jawOpen", "mouthClose"]),
        ("funnel", vec!["mouthFunnel"]),
        ("pucker", vec!["mouthPucker"]),
        ("smile", vec!["mouthSmileLeft", "mouthSmileRight", "cheekRaiseLeft", "cheekRaiseRight"]),
        ("frown", vec!["mouthFrownLeft", "mouthFrownRight"]),
        ("dimple", vec!["mouthDimpleLeft", "mouthDimpleRight"]),
        ("mouthStretch", vec!["mouthStretchLeft", "mouthStretchRight"]),
        ("lipRoll", vec!["mouthRollLower", "mouthRollUpper"]),
        ("shrug", vec!["mouthShrugLower", "mouthShrugUpper"]),
        ("press", vec!["mouthPressLeft", "mouthPressRight"]),
        ("lipsApart", vec!["mouthLowerDownLeft", "mouthLowerDownRight", "mouthUpperUpLeft", "mouthUpperUpRight"]),
        ("sneer", vec!["noseSneerLeft", "noseSneerRight"]),
        ("puffTongue", vec!["cheekPuff", "tongueOut"]),
    ]
}

/// The default FACS set for a rig using the default names; for any other
/// rig, one expression per shape.
pub fn default_facs(rig: &BlendshapeRig) -> Result<FacsSpec> {
    if rig.names() == default_shape_names().as_slice() {
        let entries = default_facs_entries();
        let refs: Vec<(&str, &[&str])> = entries.iter().map(|(n, a)| (*n, a.as_slice())).collect();
        FacsSpec::from_active(rig, &refs)
    } else {
        let n = rig.shape_count();
        FacsSpec::new(
            (0..n)
                .map(|i| FacsExpression {
                    name: rig.names()[i].clone(),
                    weights: WeightVector::one_hot(n, i),
                })
                .collect(),
        )
    }
}

/// Smooth radial-basis warp and weight perturbation defining one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSubjectSpec {
    pub seed: u64,
    pub warp_centers: Vec<Vec3>,
    pub warp_radii: Vec<f64>,
    pub warp_amplitudes: Vec<Vec3>,
    /// In `[0, 0.3]`: active weights become `1 - U(0, noise)` and one
    /// inactive shape per scan gets `U(0, noise)`.
    pub weight_noise: f64,
}

impl SyntheticSubjectSpec {
    /// Seeded spec with `warps` radial bumps of up to `amplitude` mesh units
    /// spread over a rig's neutral.
    pub fn random(seed: u64, template: &BlendshapeRig, warps: usize, amplitude: f64, weight_noise: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_5ab1ec7);
        let verts = template.neutral().vertices();
        let mut spec = SyntheticSubjectSpec {
            seed,
            warp_centers: Vec::with_capacity(warps),
            warp_radii: Vec::with_capacity(warps),
            warp_amplitudes: Vec::with_capacity(warps),
            weight_noise,
        };
        for _ in 0..warps {
            spec.warp_centers.push(verts[rng.random_range(0..verts.len())]);
            spec.warp_radii.push(rng.random_range(0.25..0.45));
            let a = amplitude.abs();
            spec.warp_amplitudes.push([
                rng.random_range(-a..=a),
                rng.random_range(-a..=a),
                rng.random_range(-a..=a),
            ]);
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.warp_centers.len();
        if self.warp_radii.len() != n || self.warp_amplitudes.len() != n {
            return Err(Error::Precondition("warp parameter lists differ in length".into()));
        }
        if self.warp_radii.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Precondition("warp radii must be positive".into()));
        }
        if !(0.0..=0.3).contains(&self.weight_noise) {
            return Err(Error::Precondition(format!(
                "weight_noise must be in [0, 0.3], got {}",
                self.weight_noise
            )));
        }
        Ok(())
    }

    /// Warp displacement at `p`.
    pub fn warp(&self, p: Vec3) -> Vec3 {
        let mut d = [0.0; 3];
        for ((c, r), a) in self.warp_centers.iter().zip(&self.warp_radii).zip(&self.warp_amplitudes) {
            let w = wendland(crate::mesh::distance(p, *c) / r);
            if w != 0.0 {
                for k in 0..3 {
                    d[k] += w * a[k];
                }
            }
        }
        d
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSubject {
    pub scans: SubjectScans,
    /// Warped template: the rig the scans were synthesized from.
    pub truth: BlendshapeRig,
    /// Weights used for each scan.
    pub weights: Vec<WeightVector>,
}

fn face_normal(m: &[Vec3], f: &[u32; 3]) -> Vec3 {
    let [a, b, c] = f.map(|i| m[i as usize]);
    cross(sub(b, a), sub(c, a))
}

fn check_orientation(before: &[Vec3], after: &[Vec3], faces: &[[u32; 3]]) -> Result<()> {
    for (i, f) in faces.iter().enumerate() {
        if dot(face_normal(before, f), face_normal(after, f)) <= 0.0 {
            return Err(Error::Amplitude { face: i });
        }
    }
    Ok(())
}

/// Warps the template into a ground-truth subject rig and synthesizes its
/// FACS scans. The neutral is `phi(S0)` and shape `i` is
/// `phi(S0 + S_i) - phi(S0)`, written as `S_i + w(S0 + S_i) - w(S0)` with
/// `phi(p) = p + w(p)`.
pub fn synth_fixture(template: &BlendshapeRig, facs: &FacsSpec, spec: &SyntheticSubjectSpec) -> Result<SyntheticSubject> {
    spec.validate()?;
    let n = template.shape_count();
    if let Some(e) = facs.expressions().iter().find(|e| e.weights.len() != n) {
        return Err(Error::dim(format!("FACS expression '{}'", e.name), n, e.weights.len()));
    }
    let s0 = template.neutral().vertices();
    let faces = template.neutral().faces();
    let w0: Vec<Vec3> = s0.iter().map(|p| spec.warp(*p)).collect();
    let neutral_pos: Vec<Vec3> = s0.iter().zip(&w0).map(|(p, w)| [p[0] + w[0], p[1] + w[1], p[2] + w[2]]).collect();
    check_orientation(s0, &neutral_pos, faces)?;

    let mut shapes = Vec::with_capacity(n);
    for s in template.shapes() {
        let moved: Vec<Vec3> = s0.iter().zip(s).map(|(p, d)| [p[0] + d[0], p[1] + d[1], p[2] + d[2]]).collect();
        let shape: Displacement = moved
            .iter()
            .zip(s)
            .zip(&w0)
            .map(|((m, d), base)| {
                let w = spec.warp(*m);
                [d[0] + w[0] - base[0], d[1] + w[1] - base[1], d[2] + w[2] - base[2]]
            })
            .collect();
        let warped: Vec<Vec3> = neutral_pos
            .iter()
            .zip(&shape)
            .map(|(p, d)| [p[0] + d[0], p[1] + d[1], p[2] + d[2]])
            .collect();
        check_orientation(&moved, &warped, faces)?;
        shapes.push(shape);
    }
    let mut neutral = template.neutral().with_positions(neutral_pos)?;
    neutral.set_name(format!("subject{}", spec.seed));
    let truth = BlendshapeRig::new(neutral.clone(), shapes, template.names().to_vec(), template.extreme_set().clone())?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut weights = Vec::with_capacity(facs.len());
    let mut expressions = Vec::with_capacity(facs.len());
    for e in facs.expressions() {
        let binary = e.weights.as_slice();
        let w = if spec.weight_noise > 0.0 {
            let mut w: Vec<f64> = binary
                .iter()
                .map(|&b| if b == 1.0 { 1.0 - rng.random_range(0.0..spec.weight_noise) } else { 0.0 })
                .collect();
            let inactive: Vec<usize> = (0..n).filter(|&i| binary[i] == 0.0).collect();
            if !inactive.is_empty() {
                let i = inactive[rng.random_range(0..inactive.len())];
                w[i] = rng.random_range(0.0..spec.weight_noise);
            }
            WeightVector::new(w)?
        } else {
            e.weights.clone()
        };
        let mut scan = synthesize_expression(&truth, &w)?;
        scan.set_name(e.name.clone());
        expressions.push(scan);
        weights.push(w);
    }
    Ok(SyntheticSubject {
        scans: SubjectScans::new(neutral, expressions, facs.clone())?,
        truth,
        weights,
    })
}

/// Checks that a mesh has no triangle whose orientation flips relative to `reference`.
pub fn check_no_inversion(reference: &Mesh, mesh: &Mesh) -> Result<()> {
    reference.ensure_same_topology(mesh, "mesh")?;
    check_orientation(reference.vertices(), mesh.vertices(), reference.faces())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_facs_covers_every_shape() {
        let rig = procedural_template(&TemplateSpec {
            grid: 8,
            ..Default::default()
        })
        .unwrap();
        let facs = default_facs(&rig).unwrap();
        assert_eq!(facs.len(), 26);
        for i in 0..rig.shape_count() {
            assert!(
                facs.expressions().iter().any(|e| e.weights.as_slice()[i] == 1.0),
                "{} never active",
                rig.names()[i]
            );
        }
    }

    #[test]
    fn template_is_valid_and_shapes_move() {
        let rig = procedural_template(&TemplateSpec {
            grid: 10,
            ..Default::default()
        })
        .unwrap();
        assert!(rig.validate().is_empty());
        assert_eq!(rig.extreme_set().len(), 14);
        for s in rig.shapes() {
            assert!(s.iter().any(|d| d.iter().any(|c| *c != 0.0)));
        }
    }

    #[test]
    fn huge_warp_is_rejected() {
        let rig = procedural_template(&TemplateSpec {
            grid: 8,
            ..Default::default()
        })
        .unwrap();
        let facs = default_facs(&rig).unwrap();
        let spec = SyntheticSubjectSpec {
            seed: 1,
            warp_centers: vec![[0.0, 0.0, 0.3]],
            warp_radii: vec![0.3],
            warp_amplitudes: vec![[3.0, 0.0, 0.0]],
            weight_noise: 0.0,
        };
        assert!(matches!(synth_fixture(&rig, &facs, &spec), Err(Error::Amplitude { .. })));
    }
}
