//! Minimal OBJ reader/writer: `v`, `vt` and triangular `f v/vt` records.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Mesh, Uv, Vec3};
use crate::error::{Error, Result};

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_obj(&text, &name)
}

pub fn parse_obj(text: &str, name: &str) -> Result<Mesh> {
    let mut positions: Vec<Vec3> = Vec::new();
    let mut texcoords: Vec<Uv> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    // per-vertex vt index, resolved after all records are read
    let mut vertex_vt: Vec<Option<(usize, usize)>> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let tag = parts.next().unwrap_or("");
        let fmt_err = |message: String| Error::Format {
            line: line_no,
            message,
        };
        match tag {
            "v" => {
                let c = parse_floats(parts, 3).map_err(fmt_err)?;
                positions.push([c[0], c[1], c[2]]);
                vertex_vt.push(None);
            }
            "vt" => {
                let c = parse_floats(parts, 2).map_err(fmt_err)?;
                texcoords.push([c[0], c[1]]);
            }
            "f" => {
                let corners: Vec<&str> = parts.collect();
                if corners.len() != 3 {
                    return Err(Error::UnsupportedGeometry {
                        line: line_no,
                        message: format!("face with {} corners; only triangles", corners.len()),
                    });
                }
                let mut face = [0u32; 3];
                for (k, corner) in corners.iter().enumerate() {
                    let mut fields = corner.split('/');
                    let vi = parse_index(fields.next(), positions.len()).map_err(fmt_err)?;
                    let ti = match fields.next() {
                        Some(s) if !s.is_empty() => {
                            Some(parse_index(Some(s), texcoords.len()).map_err(fmt_err)?)
                        }
                        _ => None,
                    };
                    if let Some(ti) = ti {
                        match vertex_vt[vi] {
                            None => vertex_vt[vi] = Some((ti, line_no)),
                            Some((prev, _)) if prev == ti || texcoords[prev] == texcoords[ti] => {}
                            Some(_) => {
                                return Err(Error::UnsupportedGeometry {
                                    line: line_no,
                                    message: format!(
                                        "vertex {} carries more than one UV (split seams are not supported)",
                                        vi + 1
                                    ),
                                })
                            }
                        }
                    }
                    face[k] = vi as u32;
                }
                faces.push(face);
            }
            // groups, objects, materials and normals carry nothing we need
            "vn" | "g" | "o" | "s" | "usemtl" | "mtllib" | "l" | "p" => {}
            other => return Err(fmt_err(format!("unknown record '{other}'"))),
        }
    }

    let mut uvs = Vec::with_capacity(positions.len());
    let mut referenced = vec![false; positions.len()];
    for f in &faces {
        for &i in f {
            referenced[i as usize] = true;
        }
    }
    for (i, vt) in vertex_vt.iter().enumerate() {
        match vt {
            Some((t, _)) => uvs.push(texcoords[*t]),
            None if !referenced[i] => uvs.push([0.0, 0.0]),
            None => {
                return Err(Error::InvalidMesh(format!(
                    "vertex {} is used by a face but has no UV",
                    i + 1
                )))
            }
        }
    }
    Mesh::new(name, positions, faces, uvs)
}

fn parse_floats<'a>(parts: impl Iterator<Item = &'a str>, n: usize) -> Result<Vec<f64>, String> {
    let vals: Vec<f64> = parts
        .take(n)
        .map(|s| s.parse::<f64>().map_err(|e| format!("bad number '{s}': {e}")))
        .collect::<Result<_, _>>()?;
    if vals.len() < n {
        return Err(format!("expected {n} coordinates, found {}", vals.len()));
    }
    Ok(vals)
}

fn parse_index(field: Option<&str>, count: usize) -> Result<usize, String> {
    let s = field.ok_or_else(|| "missing index".to_string())?;
    let i: i64 = s.parse().map_err(|e| format!("bad index '{s}': {e}"))?;
    let resolved = if i < 0 { count as i64 + i } else { i - 1 };
    if resolved < 0 || resolved as usize >= count {
        return Err(format!("index {i} out of range (have {count})"));
    }
    Ok(resolved as usize)
}

/// Writes `v`/`vt`/`f v/vt` records with shortest round-trip float formatting.
pub fn write_obj(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}", mesh.name());
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
    }
    for uv in mesh.uvs() {
        let _ = writeln!(out, "vt {} {}", uv[0], uv[1]);
    }
    for f in mesh.faces() {
        let (a, b, c) = (f[0] + 1, f[1] + 1, f[2] + 1);
        let _ = writeln!(out, "f {a}/{a} {b}/{b} {c}/{c}");
    }
    out
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_obj(mesh)).map_err(|e| Error::io(path, e))
}
