use std::collections::BTreeMap;

use super::texture::{TextureChannel, TexturePack, TextureRole};
use super::NormalizedInfluenceSet;
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::rig::WeightVector;

fn check_resolution(pack: &TexturePack, set: &NormalizedInfluenceSet) -> Result<()> {
    if pack.width() != set.width() || pack.height() != set.height() {
        return Err(Error::dim(
            "texture vs influence resolution",
            set.width() * set.height(),
            pack.width() * pack.height(),
        ));
    }
    Ok(())
}

fn weighted_sum(textures: &[TexturePack], weights: &[Raster], channel: TextureChannel) -> Raster {
    let first = textures[0].channel(channel).expect("channel present in all packs");
    let comps = first.channels();
    let mut data = vec![0.0f32; first.data().len()];
    for (p, px) in data.chunks_exact_mut(comps).enumerate() {
        for (c, out) in px.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for (t, w) in textures.iter().zip(weights) {
                let v = t.channel(channel).unwrap().data()[p * comps + c];
                acc += w.data()[p] as f64 * v as f64;
            }
            *out = acc as f32;
        }
    }
    Raster::from_data(first.width(), first.height(), comps, data).expect("same shape as input")
}

/// `T_compress = sum_i I_compress_i * T_i` and likewise for stretch, for
/// every channel of the packs.
pub fn extract_compress_stretch(
    textures: &[TexturePack],
    normalized: &NormalizedInfluenceSet,
) -> Result<(TexturePack, TexturePack)> {
    let first = textures
        .first()
        .ok_or_else(|| Error::Precondition("need at least one expression texture".into()))?;
    if textures.len() != normalized.len() {
        return Err(Error::dim("expression textures", normalized.len(), textures.len()));
    }
    for t in textures {
        first.ensure_compatible(t, "expression texture")?;
    }
    check_resolution(first, normalized)?;
    let build = |role, weights: &[Raster]| {
        let planes = first
            .channels()
            .into_iter()
            .map(|c| (c, weighted_sum(textures, weights, c)))
            .collect();
        TexturePack::from_channels(role, first.width(), first.height(), planes)
    };
    Ok((
        build(TextureRole::Compress, &normalized.compress),
        build(TextureRole::Stretch, &normalized.stretch),
    ))
}

/// Values pushed back into a channel's range at storage.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClampCounts(pub BTreeMap<TextureChannel, usize>);

impl ClampCounts {
    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn get(&self, c: TextureChannel) -> usize {
        self.0.get(&c).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendOutput {
    /// Clamped to each channel's storable range.
    pub texture: TexturePack,
    /// The formula's value before clamping.
    pub raw: TexturePack,
    pub clamped: ClampCounts,
}

/// `T = T_N + sum_i a_i (Ic_i (T_C - T_N) + Is_i (T_S - T_N))`, per pixel
/// and component, accumulated in f64 in shape order.
pub fn runtime_blend(
    neutral: &TexturePack,
    compress: &TexturePack,
    stretch: &TexturePack,
    influences: &NormalizedInfluenceSet,
    weights: &WeightVector,
) -> Result<BlendOutput> {
    neutral.ensure_compatible(compress, "compress texture")?;
    neutral.ensure_compatible(stretch, "stretch texture")?;
    check_resolution(neutral, influences)?;
    if weights.len() != influences.len() {
        return Err(Error::dim("weights", influences.len(), weights.len()));
    }
    let alpha = weights.as_slice();
    let mut raw_planes = Vec::new();
    let mut clamped_planes = Vec::new();
    let mut counts = ClampCounts::default();
    for ch in neutral.channels() {
        let tn = neutral.channel(ch).unwrap();
        let tc = compress.channel(ch).unwrap();
        let ts = stretch.channel(ch).unwrap();
        let comps = tn.channels();
        let mut raw = vec![0.0f32; tn.data().len()];
        for (p, px) in raw.chunks_exact_mut(comps).enumerate() {
            for (c, out) in px.iter_mut().enumerate() {
                let k = p * comps + c;
                let n = tn.data()[k] as f64;
                let dc = tc.data()[k] as f64 - n;
                let ds = ts.data()[k] as f64 - n;
                let mut t = n;
                for (i, a) in alpha.iter().enumerate() {
                    if *a == 0.0 {
                        continue;
                    }
                    t += a * influences.compress[i].data()[p] as f64 * dc
                        + a * influences.stretch[i].data()[p] as f64 * ds;
                }
                *out = t as f32;
            }
        }
        let mut stored = raw.clone();
        if let Some((lo, hi)) = ch.range() {
            let mut n = 0;
            for v in stored.iter_mut() {
                if *v < lo || *v > hi {
                    *v = v.clamp(lo, hi);
                    n += 1;
                }
            }
            counts.0.insert(ch, n);
        }
        raw_planes.push((ch, Raster::from_data(tn.width(), tn.height(), comps, raw)?));
        clamped_planes.push((ch, Raster::from_data(tn.width(), tn.height(), comps, stored)?));
    }
    let (w, h) = (neutral.width(), neutral.height());
    Ok(BlendOutput {
        texture: TexturePack::from_channels(TextureRole::Expression, w, h, clamped_planes),
        raw: TexturePack::from_channels(TextureRole::Expression, w, h, raw_planes),
        clamped: counts,
    })
}
