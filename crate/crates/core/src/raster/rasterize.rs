use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;

use super::{GeometryImage, Mask, Raster, ScalarImage};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Uv, Vec3, VertexScalarField};

#[derive(Debug, Clone, Copy)]
struct Coverage {
    corners: [u32; 3],
    bary: [f64; 3],
}

/// Per-pixel triangle coverage of a UV layout at one resolution. Build once,
/// reuse for every per-vertex field of the same topology.
#[derive(Debug, Clone)]
pub struct UvRasterizer {
    width: usize,
    height: usize,
    vertex_count: usize,
    topology_id: u64,
    coverage: Vec<Option<Coverage>>,
}

/// Edge function with the endpoints put in a canonical order, so that the two
/// triangles sharing an edge evaluate exactly negated values on it.
#[inline]
fn edge(a: Uv, b: Uv, p: Uv) -> f64 {
    let (a, b, sign) = if (a[0], a[1]) <= (b[0], b[1]) {
        (a, b, 1.0)
    } else {
        (b, a, -1.0)
    };
    sign * ((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]))
}

/// Barycentric coordinates of `p`, or `None` when outside or degenerate.
/// A point equal to a corner gets exactly `1` for that corner.
#[inline]
fn barycentric(t: [Uv; 3], p: Uv) -> Option<[f64; 3]> {
    let d0 = edge(t[1], t[2], t[0]);
    let d1 = edge(t[2], t[0], t[1]);
    let d2 = edge(t[0], t[1], t[2]);
    if d0 == 0.0 || d1 == 0.0 || d2 == 0.0 {
        return None;
    }
    let l0 = edge(t[1], t[2], p) / d0;
    let l1 = edge(t[2], t[0], p) / d1;
    let l2 = edge(t[0], t[1], p) / d2;
    if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
        return None;
    }
    let s = l0 + l1 + l2;
    Some([l0 / s, l1 / s, l2 / s])
}

#[inline]
fn pixel_center(i: usize, j: usize, w: usize, h: usize) -> Uv {
    [(i as f64 + 0.5) / w as f64, (j as f64 + 0.5) / h as f64]
}

fn overlap_cache() -> &'static Mutex<HashMap<u64, Vec<(usize, usize)>>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Vec<(usize, usize)>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Face pairs whose UV triangles share interior area. Cached per topology.
pub(crate) fn uv_overlaps(mesh: &Mesh) -> Vec<(usize, usize)> {
    let id = mesh.topology_id();
    if let Some(hit) = overlap_cache().lock().unwrap().get(&id) {
        return hit.clone();
    }
    let pairs = find_overlaps(mesh);
    overlap_cache().lock().unwrap().insert(id, pairs.clone());
    pairs
}

fn find_overlaps(mesh: &Mesh) -> Vec<(usize, usize)> {
    let uvs = mesh.uvs();
    let tris: Vec<[Uv; 3]> = mesh
        .faces()
        .iter()
        .map(|f| [uvs[f[0] as usize], uvs[f[1] as usize], uvs[f[2] as usize]])
        .collect();
    let cells = ((tris.len() as f64).sqrt().ceil() as usize).clamp(1, 256);
    let cell_of = |x: f64| ((x.clamp(0.0, 1.0) * cells as f64) as usize).min(cells - 1);
    let mut grid: Vec<Vec<usize>> = vec![Vec::new(); cells * cells];
    for (fi, t) in tris.iter().enumerate() {
        let (lo, hi) = bbox(t);
        for cy in cell_of(lo[1])..=cell_of(hi[1]) {
            for cx in cell_of(lo[0])..=cell_of(hi[0]) {
                grid[cy * cells + cx].push(fi);
            }
        }
    }
    let mut pairs = Vec::new();
    for bucket in &grid {
        for (k, &a) in bucket.iter().enumerate() {
            for &b in &bucket[k + 1..] {
                if triangles_overlap(&tris[a], &tris[b]) {
                    pairs.push((a.min(b), a.max(b)));
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

fn bbox(t: &[Uv; 3]) -> (Uv, Uv) {
    let lo = [
        t[0][0].min(t[1][0]).min(t[2][0]),
        t[0][1].min(t[1][1]).min(t[2][1]),
    ];
    let hi = [
        t[0][0].max(t[1][0]).max(t[2][0]),
        t[0][1].max(t[1][1]).max(t[2][1]),
    ];
    (lo, hi)
}

/// Separating-axis test; touching along edges or corners is not an overlap.
fn triangles_overlap(a: &[Uv; 3], b: &[Uv; 3]) -> bool {
    let area = |t: &[Uv; 3]| {
        ((t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[1][1] - t[0][1]) * (t[2][0] - t[0][0])).abs()
    };
    if area(a) == 0.0 || area(b) == 0.0 {
        return false;
    }
    let scale = a
        .iter()
        .chain(b.iter())
        .flat_map(|p| p.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1e-300);
    let eps = 1e-12 * scale * scale;
    for t in [a, b] {
        for k in 0..3 {
            let p = t[k];
            let q = t[(k + 1) % 3];
            let axis = [q[1] - p[1], p[0] - q[0]];
            let proj = |s: &[Uv; 3]| {
                let vals = s.map(|v| v[0] * axis[0] + v[1] * axis[1]);
                (
                    vals[0].min(vals[1]).min(vals[2]),
                    vals[0].max(vals[1]).max(vals[2]),
                )
            };
            let (amin, amax) = proj(a);
            let (bmin, bmax) = proj(b);
            if amax <= bmin + eps || bmax <= amin + eps {
                return false;
            }
        }
    }
    true
}

impl UvRasterizer {
    pub fn new(mesh: &Mesh, width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::Precondition(format!(
                "raster resolution must be at least 2, got {width}x{height}"
            )));
        }
        let uvs = mesh.uvs();
        for f in mesh.faces() {
            for &v in f {
                let uv = uvs[v as usize];
                if !(0.0..=1.0).contains(&uv[0]) || !(0.0..=1.0).contains(&uv[1]) {
                    return Err(Error::Precondition(format!(
                        "vertex {v} has UV {uv:?} outside [0,1]^2"
                    )));
                }
            }
        }
        let overlaps = uv_overlaps(mesh);
        if !overlaps.is_empty() {
            return Err(Error::UvOverlap { pairs: overlaps });
        }

        let tris: Vec<([Uv; 3], (Uv, Uv))> = mesh
            .faces()
            .iter()
            .map(|f| {
                let t = [uvs[f[0] as usize], uvs[f[1] as usize], uvs[f[2] as usize]];
                (t, bbox(&t))
            })
            .collect();
        let faces = mesh.faces();
        let coverage: Vec<Option<Coverage>> = (0..height)
            .into_par_iter()
            .flat_map_iter(|j| {
                let mut row = vec![None; width];
                let v = (j as f64 + 0.5) / height as f64;
                for (fi, (t, (lo, hi))) in tris.iter().enumerate() {
                    if v < lo[1] || v > hi[1] {
                        continue;
                    }
                    let i0 = ((lo[0] * width as f64 - 0.5).floor().max(0.0)) as usize;
                    let i1 = ((hi[0] * width as f64 - 0.5).ceil().max(0.0) as usize).min(width - 1);
                    for (i, slot) in row.iter_mut().enumerate().take(i1 + 1).skip(i0) {
                        if slot.is_some() {
                            continue;
                        }
                        if let Some(bary) = barycentric(*t, pixel_center(i, j, width, height)) {
                            *slot = Some(Coverage {
                                corners: faces[fi],
                                bary,
                            });
                        }
                    }
                }
                row.into_iter()
            })
            .collect();
        Ok(UvRasterizer {
            width,
            height,
            vertex_count: mesh.vertex_count(),
            topology_id: mesh.topology_id(),
            coverage,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn topology_id(&self) -> u64 {
        self.topology_id
    }

    pub fn mask(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.coverage.iter().map(Option::is_some).collect(),
        }
    }

    /// Interpolates `channels` values per vertex (`values.len() == V * channels`).
    /// Uncovered pixels are zero; covered pixels stay within the hull of their
    /// triangle's corner values.
    pub fn rasterize(&self, values: &[f64], channels: usize) -> Result<Raster> {
        if values.len() != self.vertex_count * channels {
            return Err(Error::dim(
                "per-vertex data",
                self.vertex_count * channels,
                values.len(),
            ));
        }
        let data: Vec<f32> = self
            .coverage
            .par_iter()
            .flat_map_iter(|cov| {
                let mut px = vec![0.0f32; channels];
                if let Some(cov) = cov {
                    for (c, out) in px.iter_mut().enumerate() {
                        let f = cov.corners.map(|v| values[v as usize * channels + c]);
                        let x = cov.bary[0] * f[0] + cov.bary[1] * f[1] + cov.bary[2] * f[2];
                        let lo = f[0].min(f[1]).min(f[2]);
                        let hi = f[0].max(f[1]).max(f[2]);
                        *out = x.clamp(lo, hi) as f32;
                    }
                }
                px.into_iter()
            })
            .collect();
        Raster::from_data(self.width, self.height, channels, data)
    }

    pub fn rasterize_scalar(&self, field: &VertexScalarField) -> Result<Raster> {
        self.rasterize(&field.values, 1)
    }

    pub fn rasterize_vectors(&self, values: &[Vec3]) -> Result<Raster> {
        let flat: Vec<f64> = values.iter().flatten().copied().collect();
        self.rasterize(&flat, 3)
    }

    /// Weight of vertex `v` at every covered pixel (0 where `v` is not a corner).
    pub fn vertex_footprint(&self, v: u32) -> Vec<f64> {
        self.coverage
            .iter()
            .map(|c| match c {
                Some(c) => c
                    .corners
                    .iter()
                    .zip(c.bary)
                    .filter(|(&k, _)| k == v)
                    .map(|(_, b)| b)
                    .sum(),
                None => 0.0,
            })
            .collect()
    }
}

/// Rasterizes a per-vertex scalar field over the mesh's UV layout.
pub fn rasterize_to_uv(
    mesh: &Mesh,
    field: &VertexScalarField,
    resolution: usize,
) -> Result<ScalarImage> {
    if field.len() != mesh.vertex_count() {
        return Err(Error::dim("vertex field", mesh.vertex_count(), field.len()));
    }
    let r = UvRasterizer::new(mesh, resolution, resolution)?;
    Ok(ScalarImage {
        raster: r.rasterize_scalar(field)?,
        mask: r.mask(),
    })
}

/// Geometry image of the mesh's current vertex positions.
pub fn geometry_image(mesh: &Mesh, resolution: usize) -> Result<GeometryImage> {
    let r = UvRasterizer::new(mesh, resolution, resolution)?;
    Ok(GeometryImage {
        raster: r.rasterize_vectors(mesh.vertices())?,
        mask: r.mask(),
    })
}

/// Bilinear sample of every channel at each vertex UV, ignoring masked-out
/// taps. Returns `V * channels` values, vertex-major.
pub fn sample_from_uv(raster: &Raster, mask: &Mask, mesh: &Mesh) -> Result<Vec<f64>> {
    let (w, h, ch) = (raster.width(), raster.height(), raster.channels());
    if w < 2 || h < 2 {
        return Err(Error::Precondition("raster resolution must be at least 2".into()));
    }
    if mask.width() != w || mask.height() != h {
        return Err(Error::dim("mask", w * h, mask.width() * mask.height()));
    }
    let snap = |x: f64| {
        let r = x.round();
        if (x - r).abs() < 1e-9 {
            r
        } else {
            x
        }
    };
    let mut out = Vec::with_capacity(mesh.vertex_count() * ch);
    for (vi, uv) in mesh.uvs().iter().enumerate() {
        let x = snap(uv[0] * w as f64 - 0.5);
        let y = snap(uv[1] * h as f64 - 0.5);
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let mut acc = vec![0.0f64; ch];
        let mut wsum = 0.0;
        for (dx, dy, wt) in [
            (0i64, 0i64, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            if wt == 0.0 {
                continue;
            }
            let xi = x0 as i64 + dx;
            let yi = y0 as i64 + dy;
            if xi < 0 || yi < 0 || xi >= w as i64 || yi >= h as i64 {
                continue;
            }
            let (xi, yi) = (xi as usize, yi as usize);
            if !mask.get(xi, yi) {
                continue;
            }
            wsum += wt;
            for (c, a) in acc.iter_mut().enumerate() {
                *a += wt * raster.get(xi, yi, c) as f64;
            }
        }
        if wsum <= 0.0 {
            return Err(Error::UnsampleableVertex { vertex: vi });
        }
        if wsum == 1.0 {
            out.extend(acc);
        } else {
            out.extend(acc.into_iter().map(|a| a / wsum));
        }
    }
    Ok(out)
}

pub fn sample_scalar(raster: &Raster, mask: &Mask, mesh: &Mesh) -> Result<VertexScalarField> {
    if raster.channels() != 1 {
        return Err(Error::dim("scalar raster channels", 1, raster.channels()));
    }
    VertexScalarField::new(mesh, sample_from_uv(raster, mask, mesh)?)
}

pub fn sample_positions(image: &GeometryImage, mesh: &Mesh) -> Result<Vec<Vec3>> {
    if image.raster.channels() != 3 {
        return Err(Error::dim("geometry image channels", 3, image.raster.channels()));
    }
    let flat = sample_from_uv(&image.raster, &image.mask, mesh)?;
    Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::grid_mesh;

    fn one_triangle(uvs: [Uv; 3]) -> Mesh {
        Mesh::new(
            "t",
            vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
            uvs.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn corner_weight_is_exact() {
        let t = [[0.1, 0.2], [0.7, 0.25], [0.3, 0.9]];
        assert_eq!(barycentric(t, t[0]), Some([1.0, 0.0, 0.0]));
        assert_eq!(barycentric(t, t[1]), Some([0.0, 1.0, 0.0]));
        assert_eq!(barycentric(t, t[2]), Some([0.0, 0.0, 1.0]));
    }

    #[test]
    fn constant_field_fills_mask() {
        let m = grid_mesh("g", 6, 5, [0.05, 0.1], [0.93, 0.88], |u, v| [u, v, 0.0]).unwrap();
        let img = rasterize_to_uv(&m, &VertexScalarField::constant(&m, 0.3), 64).unwrap();
        assert!(img.mask.count() > 0);
        for (p, &on) in img.mask.bits().iter().enumerate() {
            let v = img.raster.data()[p];
            if on {
                assert_eq!(v, 0.3f32);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn single_triangle_matches_closed_form() {
        let uv = [[0.1, 0.1], [0.9, 0.2], [0.3, 0.8]];
        let m = one_triangle(uv);
        let f = VertexScalarField::new(&m, vec![1.0, -2.0, 5.0]).unwrap();
        let img = rasterize_to_uv(&m, &f, 16).unwrap();
        // Cramer's rule barycentrics, independent of the edge-function route
        let (a, b, c) = (uv[0], uv[1], uv[2]);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let mut checked = 0;
        for j in 0..16 {
            for i in 0..16 {
                let p = pixel_center(i, j, 16, 16);
                let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
                let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
                let l0 = 1.0 - l1 - l2;
                let inside = l0 > 1e-9 && l1 > 1e-9 && l2 > 1e-9;
                if inside {
                    assert!(img.mask.get(i, j));
                    let expect = l0 * 1.0 + l1 * -2.0 + l2 * 5.0;
                    assert!((img.raster.get(i, j, 0) as f64 - expect).abs() < 1e-5);
                    checked += 1;
                }
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn overlapping_uvs_rejected() {
        let m = Mesh::new(
            "o",
            vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]],
            vec![[0, 1, 2], [1, 3, 0]],
            vec![[0.1, 0.1], [0.9, 0.1], [0.1, 0.9], [0.6, 0.6]],
        )
        .unwrap();
        match UvRasterizer::new(&m, 8, 8) {
            Err(Error::UvOverlap { pairs }) => assert_eq!(pairs, vec![(0, 1)]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shared_edges_are_not_overlaps() {
        let m = grid_mesh("g", 4, 4, [0.0, 0.0], [1.0, 1.0], |u, v| [u, v, 0.0]).unwrap();
        assert!(find_overlaps(&m).is_empty());
    }

    #[test]
    fn sampling_masked_out_vertex_fails() {
        let m = one_triangle([[0.02, 0.02], [0.98, 0.02], [0.02, 0.98]]);
        let mask = Mask::new(4, 4, vec![false; 16]).unwrap();
        match sample_from_uv(&Raster::zeros(4, 4, 1), &mask, &m) {
            Err(Error::UnsampleableVertex { vertex }) => assert_eq!(vertex, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn resolution_below_two_rejected() {
        let m = one_triangle([[0.1, 0.1], [0.9, 0.1], [0.1, 0.9]]);
        assert!(UvRasterizer::new(&m, 1, 8).is_err());
    }
}
