//! JSON files exchanged between commands: scan lists, fitted weights and
//! texture-pack manifests. Relative paths resolve against the JSON file's
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dyntex::{TextureChannel, TexturePack, TextureRole};
use crate::error::{Error, Result};
use crate::mesh::{load_mesh, save_mesh};
use crate::personalize::SubjectScans;
use crate::raster::{load_png, read_rfr1, save_png, write_rfr1, PngEncoding, Raster};
use crate::rig::{BlendshapeRig, FacsExpression, FacsSpec, WeightVector};
use crate::solver::FitResult;

fn base_of(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// One entry of `scans.json`. Give either `active` shape names or a full
/// binary `weights` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub name: String,
    pub mesh: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScansFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neutral: Option<PathBuf>,
    pub expressions: Vec<ScanEntry>,
}

/// Reads `scans.json`; `neutral` overrides the file's neutral entry.
pub fn load_scans(path: impl AsRef<Path>, rig: &BlendshapeRig, neutral: Option<&Path>) -> Result<SubjectScans> {
    let path = path.as_ref();
    let file: ScansFile = read_json(path)?;
    let base = base_of(path);
    let neutral_path = match (neutral, &file.neutral) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => base.join(p),
        (None, None) => {
            return Err(Error::Precondition(format!(
                "{}: no neutral mesh given",
                path.display()
            )))
        }
    };
    let neutral = load_mesh(&neutral_path)?;
    let n = rig.shape_count();
    let mut meshes = Vec::with_capacity(file.expressions.len());
    let mut facs = Vec::with_capacity(file.expressions.len());
    for e in &file.expressions {
        let w = match (&e.active, &e.weights) {
            (Some(active), None) => {
                let mut w = vec![0.0; n];
                for a in active {
                    let i = rig
                        .index_of(a)
                        .ok_or_else(|| Error::Precondition(format!("scan '{}': unknown shape '{a}'", e.name)))?;
                    w[i] = 1.0;
                }
                w
            }
            (None, Some(w)) => w.clone(),
            _ => {
                return Err(Error::Precondition(format!(
                    "scan '{}' needs exactly one of 'active' or 'weights'",
                    e.name
                )))
            }
        };
        if w.len() != n {
            return Err(Error::dim(format!("scan '{}' weights", e.name), n, w.len()));
        }
        facs.push(FacsExpression {
            name: e.name.clone(),
            weights: WeightVector::new(w)?,
        });
        meshes.push(load_mesh(base.join(&e.mesh))?);
    }
    SubjectScans::new(neutral, meshes, FacsSpec::new(facs)?)
}

/// Writes the scan meshes as OBJ next to `path` and a `scans.json` using
/// `active` name lists.
pub fn save_scans(scans: &SubjectScans, rig: &BlendshapeRig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let base = base_of(path);
    let dir = PathBuf::from("scans");
    fs::create_dir_all(base.join(&dir)).map_err(|e| Error::io(base.join(&dir), e))?;
    let neutral = dir.join("neutral.obj");
    save_mesh(&scans.neutral, base.join(&neutral))?;
    let mut entries = Vec::with_capacity(scans.len());
    for (k, (mesh, e)) in scans.expressions.iter().zip(scans.facs.expressions()).enumerate() {
        let file = dir.join(format!("{k:02}_{}.obj", e.name));
        save_mesh(mesh, base.join(&file))?;
        entries.push(ScanEntry {
            name: e.name.clone(),
            mesh: file,
            active: Some(
                e.weights
                    .as_slice()
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w == 1.0)
                    .map(|(i, _)| rig.names()[i].clone())
                    .collect(),
            ),
            weights: None,
        });
    }
    write_json(
        &ScansFile {
            neutral: Some(neutral),
            expressions: entries,
        },
        path,
    )
}

/// `fit.json`; the weights-only form (`{"weights": [...]}`) is accepted
/// wherever weights are read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

pub fn save_fit(fit: &FitResult, rig: &BlendshapeRig, path: impl AsRef<Path>) -> Result<()> {
    write_json(
        &FitFile {
            weights: fit.weights.as_slice().to_vec(),
            names: Some(rig.names().to_vec()),
            residual: Some(fit.residual),
            iterations: Some(fit.iterations),
            converged: Some(fit.converged),
        },
        path.as_ref(),
    )
}

pub fn save_weights(weights: &WeightVector, path: impl AsRef<Path>) -> Result<()> {
    write_json(
        &FitFile {
            weights: weights.as_slice().to_vec(),
            names: None,
            residual: None,
            iterations: None,
            converged: None,
        },
        path.as_ref(),
    )
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightVector> {
    let f: FitFile = read_json(path.as_ref())?;
    WeightVector::new(f.weights)
}

/// `texture.json`: one file per present channel, `.png` or `.rfr1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureFile {
    pub role: TextureRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub albedo: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specular: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<PathBuf>,
}

fn encoding_for(c: TextureChannel) -> PngEncoding {
    match c {
        TextureChannel::Albedo => PngEncoding::Srgb,
        _ => PngEncoding::Linear,
    }
}

fn load_channel(path: &Path, c: TextureChannel) -> Result<Raster> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => load_png(path, encoding_for(c)),
        Some("rfr1") | Some("rfr") => read_rfr1(path),
        _ => Err(Error::Precondition(format!(
            "{}: texture files must be .png or .rfr1",
            path.display()
        ))),
    }
}

pub fn load_texture_pack(path: impl AsRef<Path>) -> Result<TexturePack> {
    let path = path.as_ref();
    let file: TextureFile = read_json(path)?;
    let base = base_of(path);
    let get = |p: &Option<PathBuf>, c| p.as_ref().map(|p| load_channel(&base.join(p), c)).transpose();
    TexturePack::new(
        file.role,
        get(&file.albedo, TextureChannel::Albedo)?,
        get(&file.specular, TextureChannel::Specular)?,
        get(&file.displacement, TextureChannel::Displacement)?,
    )
}

/// Writes every channel as lossless RFR1 plus an 8-bit PNG preview, and a
/// `texture.json` manifest that points at the RFR1 files.
pub fn save_texture_pack(pack: &TexturePack, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let base = base_of(path);
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "texture".into());
    let mut file = TextureFile {
        role: pack.role,
        albedo: None,
        specular: None,
        displacement: None,
    };
    for c in pack.channels() {
        let r = pack.channel(c).unwrap();
        let name = format!("{stem}_{}", c.name());
        write_rfr1(r, base.join(format!("{name}.rfr1")))?;
        save_png(r, base.join(format!("{name}.png")), encoding_for(c), false, 1.0)?;
        let rel = Some(PathBuf::from(format!("{name}.rfr1")));
        match c {
            TextureChannel::Albedo => file.albedo = rel,
            TextureChannel::Specular => file.specular = rel,
            TextureChannel::Displacement => file.displacement = rel,
        }
    }
    write_json(&file, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::synth::{default_facs, procedural_template, synth_fixture, SyntheticSubjectSpec, TemplateSpec};

    #[test]
    fn scans_round_trip() {
        let rig = procedural_template(&TemplateSpec {
            grid: 6,
            ..Default::default()
        })
        .unwrap();
        let facs = default_facs(&rig).unwrap();
        let spec = SyntheticSubjectSpec::random(3, &rig, 2, 0.02, 0.0);
        let subject = synth_fixture(&rig, &facs, &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scans.json");
        save_scans(&subject.scans, &rig, &path).unwrap();
        let back = load_scans(&path, &rig, None).unwrap();
        assert_eq!(back.facs, subject.scans.facs);
        assert_eq!(back.neutral.vertices(), subject.scans.neutral.vertices());
        for (a, b) in back.expressions.iter().zip(&subject.scans.expressions) {
            assert_eq!(a.vertices(), b.vertices());
        }
    }

    #[test]
    fn weights_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let w = WeightVector::new(vec![0.0, 0.125, 1.0, 0.3]).unwrap();
        save_weights(&w, dir.path().join("w.json")).unwrap();
        assert_eq!(load_weights(dir.path().join("w.json")).unwrap(), w);
    }
}
