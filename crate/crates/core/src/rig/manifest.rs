//! JSON rig manifest. Paths are relative to the manifest's directory.
//!
//! ```json
//! {
//!   "name": "template",
//!   "neutral": "neutral.obj",
//!   "shapes": [{ "name": "jawOpen", "file": "shapes/017_jawOpen.bin", "format": "vertex-f64" }],
//!   "extreme_set": ["jawOpen"]
//! }
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BlendshapeRig, Displacement};
use crate::error::{Error, Result};
use crate::mesh::{load_mesh, save_mesh, Mesh};
use crate::raster::{read_rfr1, sample_from_uv, UvRasterizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeFormat {
    /// `V * 3` little-endian f64.
    VertexF64,
    /// `V * 3` little-endian f32.
    VertexF32,
    /// 3-channel RFR1 displacement raster, sampled at vertex UVs.
    Rfr1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeEntry {
    pub name: String,
    pub file: PathBuf,
    #[serde(default = "default_format")]
    pub format: ShapeFormat,
}

fn default_format() -> ShapeFormat {
    ShapeFormat::VertexF64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigManifest {
    #[serde(default)]
    pub name: String,
    pub neutral: PathBuf,
    pub shapes: Vec<ShapeEntry>,
    #[serde(default)]
    pub extreme_set: Vec<String>,
}

pub(crate) fn encode_vertex_f64(d: &[[f64; 3]]) -> Vec<u8> {
    d.iter()
        .flatten()
        .flat_map(|v| v.to_le_bytes())
        .collect()
}

pub(crate) fn decode_vertex_f64(bytes: &[u8], vertices: usize, what: &str) -> Result<Displacement> {
    if bytes.len() != vertices * 24 {
        return Err(Error::dim(what, vertices * 24, bytes.len()));
    }
    Ok(bytes
        .chunks_exact(24)
        .map(|c| {
            let f = |k: usize| f64::from_le_bytes(c[k * 8..k * 8 + 8].try_into().unwrap());
            [f(0), f(1), f(2)]
        })
        .collect())
}

fn decode_vertex_f32(bytes: &[u8], vertices: usize, what: &str) -> Result<Displacement> {
    if bytes.len() != vertices * 12 {
        return Err(Error::dim(what, vertices * 12, bytes.len()));
    }
    Ok(bytes
        .chunks_exact(12)
        .map(|c| {
            let f = |k: usize| f32::from_le_bytes(c[k * 4..k * 4 + 4].try_into().unwrap()) as f64;
            [f(0), f(1), f(2)]
        })
        .collect())
}

fn read_shape(entry: &ShapeEntry, base: &Path, neutral: &Mesh) -> Result<Displacement> {
    let path = base.join(&entry.file);
    let what = format!("shape '{}'", entry.name);
    match entry.format {
        ShapeFormat::VertexF64 => {
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            decode_vertex_f64(&bytes, neutral.vertex_count(), &what)
        }
        ShapeFormat::VertexF32 => {
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            decode_vertex_f32(&bytes, neutral.vertex_count(), &what)
        }
        ShapeFormat::Rfr1 => {
            let raster = read_rfr1(&path)?;
            if raster.channels() != 3 {
                return Err(Error::dim(format!("{what} channels"), 3, raster.channels()));
            }
            let mask = UvRasterizer::new(neutral, raster.width(), raster.height())?.mask();
            let flat = sample_from_uv(&raster, &mask, neutral)?;
            Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
        }
    }
}

pub fn load_rig(path: impl AsRef<Path>) -> Result<BlendshapeRig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: RigManifest = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut neutral = load_mesh(base.join(&manifest.neutral))?;
    if !manifest.name.is_empty() {
        neutral.set_name(manifest.name.clone());
    }
    let shapes = manifest
        .shapes
        .iter()
        .map(|e| read_shape(e, base, &neutral))
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = manifest.shapes.iter().map(|e| e.name.clone()).collect();
    let extreme = manifest
        .extreme_set
        .iter()
        .map(|n| {
            names
                .iter()
                .position(|m| m == n)
                .ok_or_else(|| Error::InvalidRig(vec![format!("extreme shape '{n}' not in rig")]))
        })
        .collect::<Result<BTreeSet<_>>>()?;
    BlendshapeRig::new(neutral, shapes, names, extreme)
}

/// Writes `<stem>.json`, the neutral OBJ and one f64 buffer per shape next to it.
pub fn save_rig(rig: &BlendshapeRig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "rig".into());
    let shape_dir = PathBuf::from(format!("{stem}_shapes"));
    fs::create_dir_all(base.join(&shape_dir)).map_err(|e| Error::io(base.join(&shape_dir), e))?;
    let neutral_file = PathBuf::from(format!("{stem}_neutral.obj"));
    save_mesh(rig.neutral(), base.join(&neutral_file))?;
    let mut shapes = Vec::with_capacity(rig.shape_count());
    for (i, (name, d)) in rig.names().iter().zip(rig.shapes()).enumerate() {
        let file = shape_dir.join(format!("{i:03}_{name}.bin"));
        let full = base.join(&file);
        fs::write(&full, encode_vertex_f64(d)).map_err(|e| Error::io(&full, e))?;
        shapes.push(ShapeEntry {
            name: name.clone(),
            file,
            format: ShapeFormat::VertexF64,
        });
    }
    let manifest = RigManifest {
        name: rig.neutral().name().to_string(),
        neutral: neutral_file,
        shapes,
        extreme_set: rig
            .extreme_set()
            .iter()
            .map(|&i| rig.names()[i].clone())
            .collect(),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}
