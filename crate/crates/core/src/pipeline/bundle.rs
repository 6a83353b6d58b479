//! Rig bundle: a directory with `bundle.json`, one little-endian geometry
//! buffer, texture and influence rasters (RFR1 plus PNG) and a neutral
//! preview. Every file other than the manifest is listed with its SHA-256.
//!
//! Geometry buffer layout, in order: neutral positions (f64, V x 3), UVs
//! (f64, V x 2), faces (u32, F x 3), shapes (f64, N x V x 3). Offsets and
//! counts are also spelled out in the manifest's `views`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::preview::render_preview;
use crate::dyntex::{NormalizedInfluenceSet, TextureChannel, TexturePack, TextureRole};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::raster::{decode_rfr1, encode_png, encode_rfr1, PngEncoding, Raster, UvRasterizer};
use crate::rig::BlendshapeRig;

pub const BUNDLE_FORMAT: &str = "facerig-bundle";
pub const BUNDLE_VERSION: u32 = 1;
pub const PREVIEW_SIZE: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct BundleTextures {
    pub neutral: TexturePack,
    pub compress: TexturePack,
    pub stretch: TexturePack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferView {
    pub name: String,
    /// `f64` or `u32`.
    pub dtype: String,
    /// Byte offset into the geometry file.
    pub offset: usize,
    /// Number of elements, each `components` scalars wide.
    pub count: usize,
    pub components: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterFiles {
    pub rfr1: String,
    pub png: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceFiles {
    pub resolution: usize,
    /// Per shape, in rig order: R = normalized compress, G = normalized stretch.
    pub maps: Vec<RasterFiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub vertex_count: usize,
    pub face_count: usize,
    pub shape_names: Vec<String>,
    pub extreme_set: Vec<String>,
    pub geometry: String,
    pub views: Vec<BufferView>,
    /// role -> channel -> files
    #[serde(default)]
    pub textures: BTreeMap<TextureRole, BTreeMap<TextureChannel, RasterFiles>>,
    #[serde(default)]
    pub influence: Option<InfluenceFiles>,
    pub preview: String,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedBundle {
    pub manifest: BundleManifest,
    pub rig: BlendshapeRig,
    pub textures: Option<BundleTextures>,
    pub influences: Option<NormalizedInfluenceSet>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn geometry_buffer(rig: &BlendshapeRig) -> (Vec<u8>, Vec<BufferView>) {
    let m = rig.neutral();
    let mut buf = Vec::new();
    let mut views = Vec::new();
    let mut push_view = |buf: &Vec<u8>, name: &str, dtype: &str, count: usize, components: usize, start: usize| {
        views.push(BufferView {
            name: name.into(),
            dtype: dtype.into(),
            offset: start,
            count,
            components,
        });
        debug_assert!(buf.len() >= start);
    };
    let start = buf.len();
    buf.extend(m.vertices().iter().flatten().flat_map(|v| v.to_le_bytes()));
    push_view(&buf, "positions", "f64", m.vertex_count(), 3, start);
    let start = buf.len();
    buf.extend(m.uvs().iter().flatten().flat_map(|v| v.to_le_bytes()));
    push_view(&buf, "uvs", "f64", m.vertex_count(), 2, start);
    let start = buf.len();
    buf.extend(m.faces().iter().flatten().flat_map(|v| v.to_le_bytes()));
    push_view(&buf, "faces", "u32", m.face_count(), 3, start);
    let start = buf.len();
    buf.extend(rig.shapes().iter().flatten().flatten().flat_map(|v| v.to_le_bytes()));
    push_view(&buf, "shapes", "f64", rig.shape_count() * m.vertex_count(), 3, start);
    (buf, views)
}

fn channel_encoding(c: TextureChannel) -> PngEncoding {
    match c {
        TextureChannel::Albedo => PngEncoding::Srgb,
        _ => PngEncoding::Linear,
    }
}

fn validate_inputs(
    rig: &BlendshapeRig,
    textures: Option<&BundleTextures>,
    influences: Option<&NormalizedInfluenceSet>,
) -> Result<()> {
    let report = rig.validate();
    if !report.is_empty() {
        return Err(Error::InvalidRig(report));
    }
    if let Some(t) = textures {
        t.neutral.ensure_compatible(&t.compress, "compress texture")?;
        t.neutral.ensure_compatible(&t.stretch, "stretch texture")?;
    }
    if let Some(inf) = influences {
        if inf.len() != rig.shape_count() {
            return Err(Error::dim("influence maps", rig.shape_count(), inf.len()));
        }
        if inf.width() != inf.height() {
            return Err(Error::Precondition("influence maps must be square".into()));
        }
    }
    Ok(())
}

/// Writes the bundle into `dir`. Inputs are validated and every file is
/// encoded in memory before the first write.
pub fn export_bundle(
    rig: &BlendshapeRig,
    textures: Option<&BundleTextures>,
    influences: Option<&NormalizedInfluenceSet>,
    dir: impl AsRef<Path>,
) -> Result<BundleManifest> {
    validate_inputs(rig, textures, influences)?;
    let dir = dir.as_ref();
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();

    let (geometry, views) = geometry_buffer(rig);
    files.insert("geometry.bin".into(), geometry);

    let mut texture_entries = BTreeMap::new();
    if let Some(t) = textures {
        for (role, pack) in [
            (TextureRole::NeutralStatic, &t.neutral),
            (TextureRole::Compress, &t.compress),
            (TextureRole::Stretch, &t.stretch),
        ] {
            let mut channels = BTreeMap::new();
            for c in pack.channels() {
                let r = pack.channel(c).unwrap();
                let stem = format!("textures/{}_{}", role_name(role), c.name());
                files.insert(format!("{stem}.rfr1"), encode_rfr1(r));
                files.insert(format!("{stem}.png"), encode_png(r, channel_encoding(c), false, 1.0)?);
                channels.insert(
                    c,
                    RasterFiles {
                        rfr1: format!("{stem}.rfr1"),
                        png: format!("{stem}.png"),
                    },
                );
            }
            texture_entries.insert(role, channels);
        }
    }

    let influence = match influences {
        Some(inf) => {
            let mut maps = Vec::with_capacity(inf.len());
            let zero = Raster::zeros(inf.width(), inf.height(), 1);
            for (i, name) in rig.names().iter().enumerate() {
                let rgb = Raster::stack(&[&inf.compress[i], &inf.stretch[i], &zero])?;
                let stem = format!("influence/{i:03}_{name}");
                files.insert(format!("{stem}.rfr1"), encode_rfr1(&rgb));
                files.insert(format!("{stem}.png"), encode_png(&rgb, PngEncoding::Linear, false, 1.0)?);
                maps.push(RasterFiles {
                    rfr1: format!("{stem}.rfr1"),
                    png: format!("{stem}.png"),
                });
            }
            Some(InfluenceFiles {
                resolution: inf.width(),
                maps,
            })
        }
        None => None,
    };

    let albedo = textures.and_then(|t| t.neutral.channel(TextureChannel::Albedo));
    let preview = render_preview(rig.neutral(), albedo, PREVIEW_SIZE);
    files.insert("preview_neutral.png".into(), encode_png(&preview, PngEncoding::Srgb, false, 1.0)?);

    let manifest = BundleManifest {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION,
        name: rig.neutral().name().to_string(),
        vertex_count: rig.vertex_count(),
        face_count: rig.neutral().face_count(),
        shape_names: rig.names().to_vec(),
        extreme_set: rig.extreme_set().iter().map(|&i| rig.names()[i].clone()).collect(),
        geometry: "geometry.bin".into(),
        views,
        textures: texture_entries,
        influence,
        preview: "preview_neutral.png".into(),
        files: files
            .iter()
            .map(|(p, b)| FileEntry {
                path: p.clone(),
                bytes: b.len(),
                sha256: sha256_hex(b),
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');

    for sub in ["textures", "influence"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    for (rel, bytes) in &files {
        let p = dir.join(rel);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    }
    let p = dir.join("bundle.json");
    fs::write(&p, json).map_err(|e| Error::io(&p, e))?;
    Ok(manifest)
}

fn role_name(role: TextureRole) -> &'static str {
    match role {
        TextureRole::NeutralStatic => "neutral",
        TextureRole::Expression => "expression",
        TextureRole::Compress => "compress",
        TextureRole::Stretch => "stretch",
    }
}

fn read_checked(dir: &Path, manifest: &BundleManifest, rel: &str) -> Result<Vec<u8>> {
    let entry = manifest
        .files
        .iter()
        .find(|f| f.path == rel)
        .ok_or_else(|| Error::Precondition(format!("bundle file '{rel}' is not listed in the manifest")))?;
    let p = dir.join(rel);
    let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
    if bytes.len() != entry.bytes || sha256_hex(&bytes) != entry.sha256 {
        return Err(Error::Checksum { path: rel.to_string() });
    }
    Ok(bytes)
}

fn view<'a>(manifest: &'a BundleManifest, name: &str) -> Result<&'a BufferView> {
    manifest
        .views
        .iter()
        .find(|v| v.name == name)
        .ok_or_else(|| Error::Precondition(format!("bundle has no '{name}' buffer view")))
}

fn slice_view<'a>(buf: &'a [u8], v: &BufferView, scalar: usize) -> Result<&'a [u8]> {
    let len = v.count * v.components * scalar;
    buf.get(v.offset..v.offset + len)
        .ok_or_else(|| Error::dim(format!("buffer view '{}'", v.name), v.offset + len, buf.len()))
}

fn f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

/// Loads a bundle, verifying every listed file's size and checksum first.
pub fn import_bundle(dir: impl AsRef<Path>) -> Result<LoadedBundle> {
    let dir = dir.as_ref();
    let mpath = dir.join("bundle.json");
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: BundleManifest = serde_json::from_str(&text)?;
    if manifest.format != BUNDLE_FORMAT {
        return Err(Error::Precondition(format!("not a rig bundle: format '{}'", manifest.format)));
    }
    let mut contents: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for f in &manifest.files {
        contents.insert(f.path.clone(), read_checked(dir, &manifest, &f.path)?);
    }
    let get = |rel: &str| -> Result<&Vec<u8>> {
        contents
            .get(rel)
            .ok_or_else(|| Error::Precondition(format!("bundle file '{rel}' is not listed in the manifest")))
    };

    let geo = get(&manifest.geometry)?;
    let (v, nf, n) = (manifest.vertex_count, manifest.face_count, manifest.shape_names.len());
    let pos = f64s(slice_view(geo, view(&manifest, "positions")?, 8)?);
    let uvs = f64s(slice_view(geo, view(&manifest, "uvs")?, 8)?);
    let faces: Vec<u32> = slice_view(geo, view(&manifest, "faces")?, 4)?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let shapes = f64s(slice_view(geo, view(&manifest, "shapes")?, 8)?);
    if pos.len() != v * 3 || uvs.len() != v * 2 || faces.len() != nf * 3 || shapes.len() != n * v * 3 {
        return Err(Error::dim("bundle geometry", v * 3, pos.len()));
    }
    let neutral = Mesh::new(
        manifest.name.clone(),
        pos.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        faces.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        uvs.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
    )?;
    let shapes: Vec<Vec<[f64; 3]>> = if v == 0 {
        vec![Vec::new(); n]
    } else {
        shapes
            .chunks_exact(v * 3)
            .map(|s| s.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
            .collect()
    };
    let extreme = manifest
        .extreme_set
        .iter()
        .map(|e| {
            manifest
                .shape_names
                .iter()
                .position(|m| m == e)
                .ok_or_else(|| Error::InvalidRig(vec![format!("extreme shape '{e}' not in rig")]))
        })
        .collect::<Result<_>>()?;
    let rig = BlendshapeRig::new(neutral, shapes, manifest.shape_names.clone(), extreme)?;

    let textures = if manifest.textures.is_empty() {
        None
    } else {
        let pack = |role: TextureRole| -> Result<TexturePack> {
            let chans = manifest
                .textures
                .get(&role)
                .ok_or_else(|| Error::Precondition(format!("bundle lacks {} textures", role_name(role))))?;
            let load = |c: TextureChannel| -> Result<Option<Raster>> {
                chans.get(&c).map(|f| decode_rfr1(get(&f.rfr1)?)).transpose()
            };
            TexturePack::new(
                role,
                load(TextureChannel::Albedo)?,
                load(TextureChannel::Specular)?,
                load(TextureChannel::Displacement)?,
            )
        };
        Some(BundleTextures {
            neutral: pack(TextureRole::NeutralStatic)?,
            compress: pack(TextureRole::Compress)?,
            stretch: pack(TextureRole::Stretch)?,
        })
    };

    let influences = match &manifest.influence {
        Some(inf) => {
            if inf.maps.len() != n {
                return Err(Error::dim("influence maps", n, inf.maps.len()));
            }
            let mask = UvRasterizer::new(rig.neutral(), inf.resolution, inf.resolution)?.mask();
            let mut compress = Vec::with_capacity(n);
            let mut stretch = Vec::with_capacity(n);
            for f in &inf.maps {
                let rgb = decode_rfr1(get(&f.rfr1)?)?;
                if rgb.channels() != 3 || rgb.width() != inf.resolution || rgb.height() != inf.resolution {
                    return Err(Error::dim(format!("influence raster {}", f.rfr1), inf.resolution, rgb.width()));
                }
                compress.push(rgb.channel(0));
                stretch.push(rgb.channel(1));
            }
            Some(NormalizedInfluenceSet { compress, stretch, mask })
        }
        None => None,
    };
    Ok(LoadedBundle {
        manifest,
        rig,
        textures,
        influences,
    })
}

/// Paths of every file a bundle directory should contain.
pub fn bundle_files(manifest: &BundleManifest) -> Vec<PathBuf> {
    std::iter::once(PathBuf::from("bundle.json"))
        .chain(manifest.files.iter().map(|f| PathBuf::from(&f.path)))
        .collect()
}
