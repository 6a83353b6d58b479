//! `RFR1` float rasters: 16-byte little-endian header (magic, width, height,
//! channels) followed by interleaved `f32` samples.

use std::fs;
use std::path::Path;

use super::Raster;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RFR1";

pub fn encode_rfr1(raster: &Raster) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + raster.data().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(raster.width() as u32).to_le_bytes());
    out.extend_from_slice(&(raster.height() as u32).to_le_bytes());
    out.extend_from_slice(&(raster.channels() as u32).to_le_bytes());
    for v in raster.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_rfr1(bytes: &[u8]) -> Result<Raster> {
    let bad = |message: &str| Error::Format {
        line: 0,
        message: format!("RFR1: {message}"),
    };
    if bytes.len() < 16 {
        return Err(bad("truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().unwrap()) as usize;
    let (w, h, c) = (word(4), word(8), word(12));
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(c))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad("header overflow"))?;
    if bytes.len() - 16 != expected {
        return Err(bad(&format!(
            "payload is {} bytes, header implies {expected}",
            bytes.len() - 16
        )));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Raster::from_data(w, h, c, data)
}

pub fn write_rfr1(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_rfr1(raster)).map_err(|e| Error::io(path, e))
}

pub fn read_rfr1(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_rfr1(&bytes)
}
