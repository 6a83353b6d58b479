//! Linear blendshape rig: a neutral mesh plus additive per-vertex
//! displacement fields, synthesized as `neutral + sum_i alpha_i * S_i`.

mod manifest;
mod names;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock};

pub use manifest::{load_rig, save_rig, RigManifest, ShapeEntry, ShapeFormat};
pub use names::{default_extreme_names, default_shape_names};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Vec3};
use crate::solver::Gram;

/// Per-vertex displacement field.
pub type Displacement = Vec<Vec3>;

#[derive(Debug, Clone)]
pub struct BlendshapeRig {
    neutral: Mesh,
    shapes: Vec<Displacement>,
    names: Vec<String>,
    extreme: BTreeSet<usize>,
    gram: OnceLock<Arc<Gram>>,
}

impl PartialEq for BlendshapeRig {
    fn eq(&self, other: &Self) -> bool {
        self.neutral == other.neutral
            && self.shapes == other.shapes
            && self.names == other.names
            && self.extreme == other.extreme
    }
}

impl BlendshapeRig {
    /// Validated constructor; fails with every violation listed.
    pub fn new(
        neutral: Mesh,
        shapes: Vec<Displacement>,
        names: Vec<String>,
        extreme: BTreeSet<usize>,
    ) -> Result<Self> {
        let rig = Self::new_unchecked(neutral, shapes, names, extreme);
        let report = rig.validate();
        if report.is_empty() {
            Ok(rig)
        } else {
            Err(Error::InvalidRig(report))
        }
    }

    /// No validation; pair with [`BlendshapeRig::validate`].
    pub fn new_unchecked(
        neutral: Mesh,
        shapes: Vec<Displacement>,
        names: Vec<String>,
        extreme: BTreeSet<usize>,
    ) -> Self {
        BlendshapeRig {
            neutral,
            shapes,
            names,
            extreme,
            gram: OnceLock::new(),
        }
    }

    pub fn neutral(&self) -> &Mesh {
        &self.neutral
    }

    pub fn shapes(&self) -> &[Displacement] {
        &self.shapes
    }

    pub fn shape(&self, i: usize) -> &Displacement {
        &self.shapes[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn extreme_set(&self) -> &BTreeSet<usize> {
        &self.extreme
    }

    pub fn shape_count(&self) -> usize {
        self.shapes.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.neutral.vertex_count()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Same shapes, different neutral (e.g. a subject's scan).
    pub fn with_neutral(&self, neutral: Mesh) -> Result<Self> {
        self.neutral.ensure_same_topology(&neutral, "rig neutral")?;
        Ok(Self::new_unchecked(
            neutral,
            self.shapes.clone(),
            self.names.clone(),
            self.extreme.clone(),
        ))
    }

    pub fn with_shapes(&self, shapes: Vec<Displacement>) -> Result<Self> {
        Self::new(
            self.neutral.clone(),
            shapes,
            self.names.clone(),
            self.extreme.clone(),
        )
    }

    /// Gram matrix of the shapes, built on first use and shared afterwards.
    pub fn gram(&self) -> Arc<Gram> {
        self.gram
            .get_or_init(|| Arc::new(Gram::build(&self.shapes)))
            .clone()
    }

    /// Lists invariant violations; empty iff the rig is valid.
    pub fn validate(&self) -> Vec<String> {
        let mut report = Vec::new();
        let n = self.shapes.len();
        let v = self.neutral.vertex_count();
        if n == 0 {
            report.push("rig has no shapes".to_string());
        }
        if self.names.len() != n {
            report.push(format!("{} names for {} shapes", self.names.len(), n));
        }
        for (i, s) in self.shapes.iter().enumerate() {
            if s.len() != v {
                let name = self.names.get(i).map(String::as_str).unwrap_or("?");
                report.push(format!(
                    "shape {i} ({name}) has {} vertices, neutral has {v}",
                    s.len()
                ));
            }
            if s.iter().flatten().any(|c| !c.is_finite()) {
                report.push(format!("shape {i} has non-finite displacement"));
            }
        }
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for name in &self.names {
            *seen.entry(name.as_str()).or_default() += 1;
        }
        let dups: Vec<&str> = seen
            .iter()
            .filter(|(_, &c)| c > 1)
            .map(|(n, _)| *n)
            .collect();
        if !dups.is_empty() {
            report.push(format!("duplicate shape names: {}", dups.join(", ")));
        }
        if let Some(bad) = self.extreme.iter().find(|&&i| i >= n) {
            report.push(format!("extreme set index {bad} out of range ({n} shapes)"));
        }
        report
    }
}

/// Blending weights, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Precondition(format!(
                "weight {i} = {v} is outside [0, 1]"
            )));
        }
        Ok(WeightVector(values))
    }

    /// Clamps every component into `[0, 1]`; NaN becomes 0.
    pub fn clamped(values: Vec<f64>) -> Self {
        WeightVector(
            values
                .into_iter()
                .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
                .collect(),
        )
    }

    pub fn zeros(n: usize) -> Self {
        WeightVector(vec![0.0; n])
    }

    pub fn one_hot(n: usize, i: usize) -> Self {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        WeightVector(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FacsExpression {
    pub name: String,
    pub weights: WeightVector,
}

/// Named expressions, each a binary combination of rig shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct FacsSpec {
    expressions: Vec<FacsExpression>,
}

impl FacsSpec {
    pub fn new(expressions: Vec<FacsExpression>) -> Result<Self> {
        if expressions.is_empty() {
            return Err(Error::Precondition("FACS spec needs at least one expression".into()));
        }
        if let Some(e) = expressions.iter().find(|e| !e.weights.is_binary()) {
            return Err(Error::Precondition(format!(
                "FACS expression '{}' has non-binary weights",
                e.name
            )));
        }
        let n = expressions[0].weights.len();
        if let Some(e) = expressions.iter().find(|e| e.weights.len() != n) {
            return Err(Error::dim(format!("FACS expression '{}'", e.name), n, e.weights.len()));
        }
        Ok(FacsSpec { expressions })
    }

    pub fn expressions(&self) -> &[FacsExpression] {
        &self.expressions
    }

    pub fn len(&self) -> usize {
        self.expressions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.expressions.is_empty()
    }

    /// Builds a spec from lists of active shape names.
    pub fn from_active(rig: &BlendshapeRig, entries: &[(&str, &[&str])]) -> Result<Self> {
        let n = rig.shape_count();
        let mut out = Vec::with_capacity(entries.len());
        for (name, active) in entries {
            let mut w = vec![0.0; n];
            for a in *active {
                let i = rig
                    .index_of(a)
                    .ok_or_else(|| Error::Precondition(format!("unknown shape '{a}'")))?;
                w[i] = 1.0;
            }
            out.push(FacsExpression {
                name: (*name).to_string(),
                weights: WeightVector(w),
            });
        }
        FacsSpec::new(out)
    }

    /// Subset by expression index, preserving order.
    pub fn select(&self, keep: &[usize]) -> Result<Self> {
        FacsSpec::new(keep.iter().map(|&k| self.expressions[k].clone()).collect())
    }
}

/// Per-shape offsets from template shapes to personalized shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetSet {
    pub deltas: Vec<Displacement>,
}

impl OffsetSet {
    pub fn zeros(shapes: usize, vertices: usize) -> Self {
        OffsetSet {
            deltas: vec![vec![[0.0; 3]; vertices]; shapes],
        }
    }

    pub fn shape_count(&self) -> usize {
        self.deltas.len()
    }

    pub fn max_norm(&self) -> f64 {
        self.deltas
            .iter()
            .flatten()
            .map(|d| crate::mesh::norm(*d))
            .fold(0.0, f64::max)
    }

    fn check(&self, rig: &BlendshapeRig) -> Result<()> {
        if self.deltas.len() != rig.shape_count() {
            return Err(Error::dim("offset shape count", rig.shape_count(), self.deltas.len()));
        }
        for d in &self.deltas {
            if d.len() != rig.vertex_count() {
                return Err(Error::dim("offset vertex count", rig.vertex_count(), d.len()));
            }
        }
        Ok(())
    }
}

/// `neutral + sum_i alpha_i * S_i`, accumulated per vertex in shape order.
pub fn synthesize_expression(rig: &BlendshapeRig, weights: &WeightVector) -> Result<Mesh> {
    if weights.len() != rig.shape_count() {
        return Err(Error::dim("weights", rig.shape_count(), weights.len()));
    }
    Ok(rig
        .neutral
        .with_positions(blend_positions(rig, weights.as_slice()))?)
}

/// Same sum as [`synthesize_expression`] for unconstrained coefficients.
pub(crate) fn blend_positions(rig: &BlendshapeRig, alpha: &[f64]) -> Vec<Vec3> {
    let mut out = rig.neutral.vertices().to_vec();
    for (a, shape) in alpha.iter().zip(&rig.shapes) {
        if *a == 0.0 {
            continue;
        }
        for (p, s) in out.iter_mut().zip(shape) {
            p[0] += a * s[0];
            p[1] += a * s[1];
            p[2] += a * s[2];
        }
    }
    out
}

/// Personalized shapes `S_i + dS_i`; the neutral is left as in `template_rig`.
pub fn apply_offsets(template_rig: &BlendshapeRig, offsets: &OffsetSet) -> Result<BlendshapeRig> {
    offsets.check(template_rig)?;
    let shapes = template_rig
        .shapes
        .iter()
        .zip(&offsets.deltas)
        .map(|(s, d)| {
            s.iter()
                .zip(d)
                .map(|(a, b)| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
                .collect()
        })
        .collect();
    Ok(BlendshapeRig::new_unchecked(
        template_rig.neutral.clone(),
        shapes,
        template_rig.names.clone(),
        template_rig.extreme.clone(),
    ))
}

/// Offsets that turn `template` shapes into `personalized` shapes.
pub fn offsets_between(template: &BlendshapeRig, personalized: &BlendshapeRig) -> Result<OffsetSet> {
    if template.shape_count() != personalized.shape_count() {
        return Err(Error::dim("shape count", template.shape_count(), personalized.shape_count()));
    }
    let deltas = template
        .shapes
        .iter()
        .zip(&personalized.shapes)
        .map(|(t, p)| {
            t.iter()
                .zip(p)
                .map(|(a, b)| [b[0] - a[0], b[1] - a[1], b[2] - a[2]])
                .collect()
        })
        .collect();
    let out = OffsetSet { deltas };
    out.check(template)?;
    Ok(out)
}

/// Poses a secondary part (eyelashes, teeth, ...) with weights fitted on the face.
pub fn drive_secondary(
    face_rig: &BlendshapeRig,
    primary_weights: &WeightVector,
    secondary_rig: &BlendshapeRig,
) -> Result<Mesh> {
    if face_rig.names != secondary_rig.names {
        return Err(Error::RigPairing(format!(
            "secondary rig '{}' does not share the face rig's {} shape names",
            secondary_rig.neutral.name(),
            face_rig.shape_count()
        )));
    }
    synthesize_expression(secondary_rig, primary_weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::grid_mesh;

    fn small_rig() -> BlendshapeRig {
        let neutral = grid_mesh("n", 3, 3, [0.1, 0.1], [0.9, 0.9], |u, v| [u, v, 0.0]).unwrap();
        let shapes = (0..2)
            .map(|k| {
                (0..9)
                    .map(|i| [0.0, 0.0, (i + k) as f64 * 0.1])
                    .collect()
            })
            .collect();
        BlendshapeRig::new(neutral, shapes, vec!["a".into(), "b".into()], BTreeSet::from([1])).unwrap()
    }

    #[test]
    fn zero_weights_give_neutral() {
        let rig = small_rig();
        let m = synthesize_expression(&rig, &WeightVector::zeros(2)).unwrap();
        assert_eq!(m.vertices(), rig.neutral().vertices());
    }

    #[test]
    fn one_hot_adds_single_shape() {
        let rig = small_rig();
        let m = synthesize_expression(&rig, &WeightVector::one_hot(2, 1)).unwrap();
        for ((p, n), s) in m.vertices().iter().zip(rig.neutral().vertices()).zip(rig.shape(1)) {
            assert_eq!(*p, [n[0] + s[0], n[1] + s[1], n[2] + s[2]]);
        }
    }

    #[test]
    fn weight_length_checked() {
        let rig = small_rig();
        assert!(matches!(
            synthesize_expression(&rig, &WeightVector::zeros(3)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn weights_outside_unit_interval_rejected() {
        assert!(WeightVector::new(vec![0.5, 1.2]).is_err());
        assert!(WeightVector::new(vec![-0.1]).is_err());
        assert_eq!(WeightVector::clamped(vec![-1.0, 2.0, f64::NAN]).as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn offsets_round_trip() {
        let rig = small_rig();
        let zero = apply_offsets(&rig, &OffsetSet::zeros(2, 9)).unwrap();
        assert_eq!(zero.shapes(), rig.shapes());
        assert!(zero.validate().is_empty());

        let neg = OffsetSet {
            deltas: rig
                .shapes()
                .iter()
                .map(|s| s.iter().map(|d| [-d[0], -d[1], -d[2]]).collect())
                .collect(),
        };
        let flat = apply_offsets(&rig, &neg).unwrap();
        assert!(flat.shapes().iter().flatten().all(|d| *d == [0.0; 3]));
    }

    #[test]
    fn validate_reports_each_problem() {
        let rig = small_rig();
        assert!(rig.validate().is_empty());

        let mut shapes = rig.shapes().to_vec();
        shapes[1].pop();
        let bad = BlendshapeRig::new_unchecked(rig.neutral().clone(), shapes, rig.names().to_vec(), BTreeSet::new());
        let report = bad.validate();
        assert_eq!(report.len(), 1);
        assert!(report[0].contains("shape 1 (b)"));

        let dup = BlendshapeRig::new_unchecked(
            rig.neutral().clone(),
            rig.shapes().to_vec(),
            vec!["a".into(), "a".into()],
            BTreeSet::new(),
        );
        let report = dup.validate();
        assert_eq!(report, vec!["duplicate shape names: a".to_string()]);
    }

    #[test]
    fn secondary_needs_matching_names() {
        let rig = small_rig();
        let other = BlendshapeRig::new(
            rig.neutral().clone(),
            rig.shapes().to_vec(),
            vec!["a".into(), "c".into()],
            BTreeSet::new(),
        )
        .unwrap();
        assert!(matches!(
            drive_secondary(&rig, &WeightVector::zeros(2), &other),
            Err(Error::RigPairing(_))
        ));
        let posed = drive_secondary(&rig, &WeightVector::zeros(2), &rig).unwrap();
        assert_eq!(posed.vertices(), rig.neutral().vertices());
    }

    #[test]
    fn facs_requires_binary() {
        let e = FacsExpression {
            name: "x".into(),
            weights: WeightVector::new(vec![0.5]).unwrap(),
        };
        assert!(FacsSpec::new(vec![e]).is_err());
        assert!(FacsSpec::new(vec![]).is_err());
    }
}
