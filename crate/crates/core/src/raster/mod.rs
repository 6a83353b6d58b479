//! UV-space rasters: geometry images, scalar maps and texture channels.
//!
//! Pixel `(i, j)` samples UV `((i + 0.5) / W, (j + 0.5) / H)`; row `j` grows
//! with `v`. Values are stored as `f32`, interleaved per pixel.

mod png_io;
mod rasterize;
mod rfr1;

pub use png_io::{encode_png, load_png, save_png, PngEncoding};
pub use rasterize::{
    geometry_image, rasterize_to_uv, sample_from_uv, sample_positions, sample_scalar,
    UvRasterizer,
};
pub use rfr1::{decode_rfr1, encode_rfr1, read_rfr1, write_rfr1};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Raster {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Raster {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Raster {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Precondition("raster needs at least one channel".into()));
        }
        if data.len() != width * height * channels {
            return Err(Error::dim("raster data", width * height * channels, data.len()));
        }
        Ok(Raster {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for j in 0..height {
            for i in 0..width {
                for c in 0..channels {
                    data.push(f(i, j, c));
                }
            }
        }
        Raster {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f32 {
        self.data[(j * self.width + i) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, c: usize, value: f32) {
        self.data[(j * self.width + i) * self.channels + c] = value;
    }

    pub fn pixel(&self, p: usize) -> &[f32] {
        &self.data[p * self.channels..(p + 1) * self.channels]
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn ensure_same_shape(&self, other: &Raster, what: &str) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::dim(
                format!("{what} resolution"),
                self.pixel_count(),
                other.pixel_count(),
            ));
        }
        if self.channels != other.channels {
            return Err(Error::dim(format!("{what} channels"), self.channels, other.channels));
        }
        Ok(())
    }

    /// Copies one channel into a single-channel raster.
    pub fn channel(&self, c: usize) -> Raster {
        let data = self.data.chunks(self.channels).map(|p| p[c]).collect();
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Interleaves single-channel rasters of equal size.
    pub fn stack(planes: &[&Raster]) -> Result<Raster> {
        let first = planes
            .first()
            .ok_or_else(|| Error::Precondition("stack of zero planes".into()))?;
        for p in planes {
            if p.channels != 1 {
                return Err(Error::dim("stacked plane channels", 1, p.channels));
            }
            first.ensure_same_shape(p, "stacked plane")?;
        }
        let n = first.pixel_count();
        let mut data = Vec::with_capacity(n * planes.len());
        for px in 0..n {
            for p in planes {
                data.push(p.data[px]);
            }
        }
        Raster::from_data(first.width, first.height, planes.len(), data)
    }

    /// Extends valid values `pixels` rings beyond the mask. Each ring takes the
    /// mean of already-filled 8-neighbours; the mask itself is not modified.
    pub fn dilate_gutter(&mut self, mask: &Mask, pixels: usize) {
        let (w, h, ch) = (self.width, self.height, self.channels);
        let mut filled = mask.bits.clone();
        for _ in 0..pixels {
            let snapshot = filled.clone();
            let mut updates = Vec::new();
            for j in 0..h {
                for i in 0..w {
                    let p = j * w + i;
                    if snapshot[p] {
                        continue;
                    }
                    let mut acc = vec![0.0f64; ch];
                    let mut n = 0usize;
                    for dj in -1i64..=1 {
                        for di in -1i64..=1 {
                            let (x, y) = (i as i64 + di, j as i64 + dj);
                            if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                                continue;
                            }
                            let q = y as usize * w + x as usize;
                            if snapshot[q] {
                                n += 1;
                                for (c, a) in acc.iter_mut().enumerate() {
                                    *a += self.data[q * ch + c] as f64;
                                }
                            }
                        }
                    }
                    if n > 0 {
                        updates.push((p, acc.into_iter().map(|a| (a / n as f64) as f32).collect::<Vec<_>>()));
                    }
                }
            }
            if updates.is_empty() {
                break;
            }
            for (p, vals) in updates {
                self.data[p * ch..(p + 1) * ch].copy_from_slice(&vals);
                filled[p] = true;
            }
        }
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Per-pixel coverage flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::dim("mask", width * height, bits.len()));
        }
        Ok(Mask {
            width,
            height,
            bits,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[j * self.width + i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// UV raster whose pixels hold interpolated xyz positions.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryImage {
    pub raster: Raster,
    pub mask: Mask,
}

impl GeometryImage {
    pub fn width(&self) -> usize {
        self.raster.width()
    }

    pub fn height(&self) -> usize {
        self.raster.height()
    }
}

/// Single-channel UV raster with its coverage mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarImage {
    pub raster: Raster,
    pub mask: Mask,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gutter_leaves_masked_pixels_alone() {
        let mut bits = vec![false; 16];
        bits[5] = true;
        let mask = Mask::new(4, 4, bits).unwrap();
        let mut r = Raster::zeros(4, 4, 1);
        r.set(1, 1, 0, 2.0);
        r.dilate_gutter(&mask, 2);
        assert_eq!(r.get(1, 1, 0), 2.0);
        // first ring copies the only valid pixel, second ring averages ring values
        assert_eq!(r.get(0, 0, 0), 2.0);
        assert_eq!(r.get(3, 3, 0), 2.0);
    }

    #[test]
    fn stack_and_channel_are_inverse() {
        let a = Raster::from_fn(3, 2, 1, |i, j, _| (i + 10 * j) as f32);
        let b = Raster::from_fn(3, 2, 1, |i, j, _| -((i * j) as f32));
        let s = Raster::stack(&[&a, &b]).unwrap();
        assert_eq!(s.channel(0), a);
        assert_eq!(s.channel(1), b);
    }
}
