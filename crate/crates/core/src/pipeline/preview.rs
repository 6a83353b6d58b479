//! Orthographic front-view rendering of a mesh, used for bundle previews.

use crate::mesh::{cross, sub, Mesh};
use crate::raster::Raster;

/// Renders `mesh` looking down -z: x to the right, y up, nearest surface
/// wins. Color is the albedo at the interpolated UV (nearest texel, or 0.8
/// gray without albedo) times `0.25 + 0.75 |n_z|` for the flat face normal.
/// Background is black.
pub fn render_preview(mesh: &Mesh, albedo: Option<&Raster>, size: usize) -> Raster {
    let mut out = Raster::zeros(size, size, 3);
    let mut depth = vec![f64::NEG_INFINITY; size * size];
    let verts = mesh.vertices();
    if verts.is_empty() || size == 0 {
        return out;
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in verts {
        for k in 0..2 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let scale = 0.9 * size as f64 / extent;
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let to_screen = |p: [f64; 3]| {
        [
            size as f64 / 2.0 + (p[0] - mid[0]) * scale,
            size as f64 / 2.0 - (p[1] - mid[1]) * scale,
        ]
    };
    let uvs = mesh.uvs();
    for f in mesh.faces() {
        let p = f.map(|i| verts[i as usize]);
        let s = p.map(to_screen);
        let n = cross(sub(p[1], p[0]), sub(p[2], p[0]));
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if len == 0.0 {
            continue;
        }
        let shade = 0.25 + 0.75 * (n[2] / len).abs();
        let area = (s[1][0] - s[0][0]) * (s[2][1] - s[0][1]) - (s[2][0] - s[0][0]) * (s[1][1] - s[0][1]);
        if area == 0.0 {
            continue;
        }
        let x0 = s.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let x1 = (s.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max).ceil() as usize).min(size - 1);
        let y0 = s.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let y1 = (s.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max).ceil() as usize).min(size - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let c = [x as f64 + 0.5, y as f64 + 0.5];
                let edge = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
                let w = [edge(s[1], s[2]) / area, edge(s[2], s[0]) / area, edge(s[0], s[1]) / area];
                if w.iter().any(|v| *v < 0.0) {
                    continue;
                }
                let z = w[0] * p[0][2] + w[1] * p[1][2] + w[2] * p[2][2];
                let k = y * size + x;
                if z <= depth[k] {
                    continue;
                }
                depth[k] = z;
                let color = match albedo {
                    Some(a) => {
                        let uv = [0, 1].map(|d| w[0] * uvs[f[0] as usize][d] + w[1] * uvs[f[1] as usize][d] + w[2] * uvs[f[2] as usize][d]);
                        let i = ((uv[0] * a.width() as f64) as usize).min(a.width() - 1);
                        let j = ((uv[1] * a.height() as f64) as usize).min(a.height() - 1);
                        let px = a.pixel(j * a.width() + i);
                        if px.len() >= 3 {
                            [px[0], px[1], px[2]]
                        } else {
                            [px[0]; 3]
                        }
                    }
                    None => [0.8; 3],
                };
                for ch in 0..3 {
                    out.set(x, y, ch, (color[ch] as f64 * shade) as f32);
                }
            }
        }
    }
    out
}
