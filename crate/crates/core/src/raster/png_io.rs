use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use super::Raster;
use crate::error::{Error, Result};

/// How stored PNG code values relate to linear raster values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PngEncoding {
    /// sRGB transfer curve; used for albedo.
    Srgb,
    /// Code value / max code.
    Linear,
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.0031308 {
        c * 12.92
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

/// Loads an 8- or 16-bit PNG as a 1- or 3-channel linear raster (alpha dropped).
pub fn load_png(path: impl AsRef<Path>, encoding: PngEncoding) -> Result<Raster> {
    let path = path.as_ref();
    let img = image::open(path)?;
    let gray = matches!(
        img,
        DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageLumaA16(_)
    );
    let decode = |v: u16| {
        let c = v as f64 / 65535.0;
        (match encoding {
            PngEncoding::Srgb => srgb_to_linear(c),
            PngEncoding::Linear => c,
        }) as f32
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    if gray {
        let buf = img.to_luma16();
        let data = buf.pixels().map(|p| decode(p.0[0])).collect();
        Raster::from_data(w, h, 1, data)
    } else {
        let buf = img.to_rgb16();
        let data = buf.pixels().flat_map(|p| p.0.map(decode)).collect();
        Raster::from_data(w, h, 3, data)
    }
}

/// Encodes a 1- or 3-channel raster as PNG bytes, clamping to `[0, 1]`
/// after `scale`.
pub fn encode_png(raster: &Raster, encoding: PngEncoding, sixteen_bit: bool, scale: f32) -> Result<Vec<u8>> {
    let encode = |v: f32| {
        let c = ((v * scale) as f64).clamp(0.0, 1.0);
        match encoding {
            PngEncoding::Srgb => linear_to_srgb(c),
            PngEncoding::Linear => c,
        }
    };
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    let wide = || -> Vec<u16> { raster.data().iter().map(|&v| (encode(v) * 65535.0).round() as u16).collect() };
    let narrow = || -> Vec<u8> { raster.data().iter().map(|&v| (encode(v) * 255.0).round() as u8).collect() };
    let image = match (raster.channels(), sixteen_bit) {
        (1, true) => ImageBuffer::<Luma<u16>, _>::from_raw(w, h, wide()).map(DynamicImage::ImageLuma16),
        (1, false) => ImageBuffer::<Luma<u8>, _>::from_raw(w, h, narrow()).map(DynamicImage::ImageLuma8),
        (3, true) => ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, wide()).map(DynamicImage::ImageRgb16),
        (3, false) => ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, narrow()).map(DynamicImage::ImageRgb8),
        (c, _) => {
            return Err(Error::ChannelMismatch(format!(
                "PNG export supports 1 or 3 channels, got {c}"
            )))
        }
    }
    .ok_or_else(|| Error::Precondition("raster buffer size mismatch".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    image.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Writes a 1- or 3-channel raster as PNG, clamping to `[0, 1]` after `scale`.
pub fn save_png(
    raster: &Raster,
    path: impl AsRef<Path>,
    encoding: PngEncoding,
    sixteen_bit: bool,
    scale: f32,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(raster, encoding, sixteen_bit, scale)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
