//! Dynamic textures: compress/stretch influence maps from edge-length change,
//! their per-pixel softmax normalization, extraction of compress and stretch
//! texture packs, and runtime blending driven by blendshape weights.

mod blend;
mod texture;

pub use blend::{extract_compress_stretch, runtime_blend, BlendOutput, ClampCounts};
pub use texture::{gaussian_blur, split_displacement, DisplacementBands, TextureChannel, TexturePack, TextureRole};

use crate::error::{Error, Result};
use crate::mesh::{one_ring_avg_edge_length, Mesh, VertexScalarField};
use crate::raster::{Mask, Raster, UvRasterizer};
use crate::rig::{synthesize_expression, BlendshapeRig, WeightVector};

/// Per-vertex compress and stretch values of `expression` against `neutral`.
/// Compress is `E_N - E_P` where the one-ring shrinks, stretch is `E_P - E_N`
/// where it grows; the other is zero.
pub fn influence_values(neutral: &Mesh, expression: &Mesh) -> Result<(VertexScalarField, VertexScalarField)> {
    neutral.ensure_same_topology(expression, "expression mesh")?;
    let signed = signed_influence(neutral, expression)?;
    let compress = signed.iter().map(|&s| if s < 0.0 { -s } else { 0.0 }).collect();
    let stretch = signed.iter().map(|&s| if s > 0.0 { s } else { 0.0 }).collect();
    Ok((
        VertexScalarField::new(neutral, compress)?,
        VertexScalarField::new(neutral, stretch)?,
    ))
}

fn signed_influence(neutral: &Mesh, expression: &Mesh) -> Result<Vec<f64>> {
    let en = one_ring_avg_edge_length(neutral)?;
    let ep = one_ring_avg_edge_length(expression)?;
    Ok(en.values.iter().zip(&ep.values).map(|(n, p)| p - n).collect())
}

/// UV-space compress (R) and stretch (G) influence of one expression.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMap {
    pub compress: Raster,
    pub stretch: Raster,
    pub mask: Mask,
}

impl InfluenceMap {
    pub fn width(&self) -> usize {
        self.compress.width()
    }

    pub fn height(&self) -> usize {
        self.compress.height()
    }

    /// R = compress, G = stretch, B = 0.
    pub fn to_rgb(&self) -> Raster {
        let zero = Raster::zeros(self.width(), self.height(), 1);
        Raster::stack(&[&self.compress, &self.stretch, &zero]).expect("planes share a shape")
    }

    pub fn from_rgb(rgb: &Raster, mask: Mask) -> Result<Self> {
        if rgb.channels() != 3 {
            return Err(Error::ChannelMismatch(format!(
                "influence raster needs 3 channels, got {}",
                rgb.channels()
            )));
        }
        if mask.width() != rgb.width() || mask.height() != rgb.height() {
            return Err(Error::dim("influence mask width", rgb.width(), mask.width()));
        }
        Ok(InfluenceMap {
            compress: rgb.channel(0),
            stretch: rgb.channel(1),
            mask,
        })
    }

    /// Largest compress or stretch value.
    pub fn peak(&self) -> f32 {
        self.compress
            .data()
            .iter()
            .chain(self.stretch.data())
            .fold(0.0f32, |m, v| m.max(*v))
    }
}

/// Rasterizes the signed edge-length change and splits it per pixel, so at
/// every pixel at most one of compress and stretch is nonzero.
pub fn influence_map(neutral: &Mesh, expression: &Mesh, resolution: usize) -> Result<InfluenceMap> {
    neutral.ensure_same_topology(expression, "expression mesh")?;
    let ras = UvRasterizer::new(neutral, resolution, resolution)?;
    influence_map_with(&ras, neutral, expression)
}

fn influence_map_with(ras: &UvRasterizer, neutral: &Mesh, expression: &Mesh) -> Result<InfluenceMap> {
    let signed = ras.rasterize(&signed_influence(neutral, expression)?, 1)?;
    let compress: Vec<f32> = signed.data().iter().map(|&s| if s < 0.0 { -s } else { 0.0 }).collect();
    let stretch: Vec<f32> = signed.data().iter().map(|&s| if s > 0.0 { s } else { 0.0 }).collect();
    Ok(InfluenceMap {
        compress: Raster::from_data(ras.width(), ras.height(), 1, compress)?,
        stretch: Raster::from_data(ras.width(), ras.height(), 1, stretch)?,
        mask: ras.mask(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizeOptions {
    /// Multiplies influence values before `exp`, in inverse mesh units.
    pub temperature: f64,
    /// Give zero weight to maps with zero influence at a pixel and
    /// renormalize over the rest; pixels with no influence at all get zero.
    pub masked: bool,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions {
            temperature: 1.0,
            masked: false,
        }
    }
}

/// Softmax-normalized influence maps, compress and stretch families kept apart.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedInfluenceSet {
    pub compress: Vec<Raster>,
    pub stretch: Vec<Raster>,
    pub mask: Mask,
}

impl NormalizedInfluenceSet {
    pub fn len(&self) -> usize {
        self.compress.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compress.is_empty()
    }

    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }
}

fn softmax_family(planes: &[&Raster], opts: &NormalizeOptions) -> Vec<Raster> {
    let k = planes.len();
    let (w, h) = (planes[0].width(), planes[0].height());
    let mut out: Vec<Vec<f32>> = vec![vec![0.0; w * h]; k];
    let mut e = vec![0.0f64; k];
    for p in 0..w * h {
        let vals: Vec<f64> = planes.iter().map(|r| r.data()[p] as f64).collect();
        let keep: Vec<bool> = vals.iter().map(|&v| !opts.masked || v != 0.0).collect();
        let top = vals
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(v, _)| opts.temperature * v)
            .fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            continue;
        }
        let mut sum = 0.0;
        for i in 0..k {
            e[i] = if keep[i] { (opts.temperature * vals[i] - top).exp() } else { 0.0 };
            sum += e[i];
        }
        for i in 0..k {
            out[i][p] = (e[i] / sum) as f32;
        }
    }
    out.into_iter()
        .map(|d| Raster::from_data(w, h, 1, d).expect("sized above"))
        .collect()
}

/// Per-pixel softmax across the `K` maps, separately for compress and
/// stretch. Pixels outside the mask hold zero influence and so get `1/K`
/// (or zero in the masked variant).
pub fn normalize_influences(maps: &[InfluenceMap], opts: &NormalizeOptions) -> Result<NormalizedInfluenceSet> {
    let first = maps
        .first()
        .ok_or_else(|| Error::Precondition("need at least one influence map".into()))?;
    for m in maps {
        m.compress.ensure_same_shape(&first.compress, "influence map")?;
        m.stretch.ensure_same_shape(&first.stretch, "influence map")?;
        if m.compress.channels() != 1 || m.stretch.channels() != 1 {
            return Err(Error::ChannelMismatch("influence planes must be single-channel".into()));
        }
    }
    if !opts.temperature.is_finite() {
        return Err(Error::Precondition("temperature must be finite".into()));
    }
    let c: Vec<&Raster> = maps.iter().map(|m| &m.compress).collect();
    let s: Vec<&Raster> = maps.iter().map(|m| &m.stretch).collect();
    Ok(NormalizedInfluenceSet {
        compress: softmax_family(&c, opts),
        stretch: softmax_family(&s, opts),
        mask: first.mask.clone(),
    })
}

/// Influence map of every one-hot expression of `rig` against its neutral.
pub fn blendshape_influence_maps(rig: &BlendshapeRig, resolution: usize) -> Result<Vec<InfluenceMap>> {
    let ras = UvRasterizer::new(rig.neutral(), resolution, resolution)?;
    (0..rig.shape_count())
        .map(|i| {
            let e = synthesize_expression(rig, &WeightVector::one_hot(rig.shape_count(), i))?;
            influence_map_with(&ras, rig.neutral(), &e)
        })
        .collect()
}

/// Normalized per-blendshape influences used by [`runtime_blend`].
pub fn blendshape_influences(
    rig: &BlendshapeRig,
    resolution: usize,
    opts: &NormalizeOptions,
) -> Result<NormalizedInfluenceSet> {
    normalize_influences(&blendshape_influence_maps(rig, resolution)?, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::grid_mesh;

    fn bump() -> (Mesh, Mesh) {
        let n = grid_mesh("n", 6, 6, [0.05, 0.05], [0.95, 0.95], |u, v| [u, v, 0.0]).unwrap();
        let e = n.transformed(|p| [p[0] + 0.2 * p[0] * p[0], p[1], 0.1 * p[1]]);
        (n, e)
    }

    #[test]
    fn identical_meshes_give_zero() {
        let (n, _) = bump();
        let (c, s) = influence_values(&n, &n).unwrap();
        assert!(c.values.iter().chain(&s.values).all(|&v| v == 0.0));
        let m = influence_map(&n, &n, 16).unwrap();
        assert_eq!(m.peak(), 0.0);
    }

    #[test]
    fn split_is_complementary_per_pixel() {
        let (n, e) = bump();
        let m = influence_map(&n, &e, 32).unwrap();
        for (c, s) in m.compress.data().iter().zip(m.stretch.data()) {
            assert!(*c >= 0.0 && *s >= 0.0);
            assert_eq!(c * s, 0.0);
        }
    }

    #[test]
    fn softmax_three_values() {
        let mk = |v: f32| InfluenceMap {
            compress: Raster::filled(2, 2, 1, v),
            stretch: Raster::zeros(2, 2, 1),
            mask: Mask::full(2, 2),
        };
        let set = normalize_influences(&[mk(0.0), mk(1.0), mk(2.0)], &NormalizeOptions::default()).unwrap();
        let z = 1.0 + 1f64.exp() + 2f64.exp();
        for (i, r) in set.compress.iter().enumerate() {
            assert!((r.get(1, 1, 0) as f64 - (i as f64).exp() / z).abs() < 1e-7);
        }
        for r in &set.stretch {
            assert!((r.get(0, 0, 0) - 1.0 / 3.0).abs() < 1e-7);
        }
    }

    #[test]
    fn masked_variant_drops_zero_maps() {
        let mk = |v: f32| InfluenceMap {
            compress: Raster::filled(1, 1, 1, v),
            stretch: Raster::zeros(1, 1, 1),
            mask: Mask::full(1, 1),
        };
        let opts = NormalizeOptions {
            masked: true,
            ..Default::default()
        };
        let set = normalize_influences(&[mk(0.0), mk(0.5)], &opts).unwrap();
        assert_eq!(set.compress[0].data()[0], 0.0);
        assert_eq!(set.compress[1].data()[0], 1.0);
        assert_eq!(set.stretch[0].data()[0], 0.0);
        assert_eq!(set.stretch[1].data()[0], 0.0);
    }
}
