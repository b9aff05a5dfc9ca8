//! PNG and raw float map reading and writing.
//!
//! Raw maps (`.f32`) are `u32 height, u32 width` followed by `height × width`
//! `f32` values in row-major order, everything little-endian.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use crate::metrics::Mask;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Reads an 8- or 16-bit grayscale PNG, dividing by the container maximum
/// (255 or 65535).
pub fn read_gray_png(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| (v as f64 / 255.0) as f32).collect(),
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| (v as f64 / 65535.0) as f32)
            .collect(),
        other => {
            return Err(Error::input(format!(
                "{}: expected 8- or 16-bit grayscale PNG, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    Tensor::from_vec(h, w, 1, data)
}

/// Reads a grayscale PNG as a mask (nonzero is foreground).
pub fn read_mask_png(path: &Path) -> Result<Mask> {
    let t = read_gray_png(path)?;
    Mask::from_bits(t.height(), t.width(), t.data().iter().map(|&v| v != 0.0).collect())
}

fn quantize16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16
}

/// Writes channel 0, clamped to `[0, 1]`, as a 16-bit grayscale PNG.
pub fn write_png16(path: &Path, t: &Tensor) -> Result<()> {
    let (h, w) = (t.height(), t.width());
    let px: Vec<u16> = (0..h * w).map(|i| quantize16(t.at(i / w, i % w, 0))).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, px).expect("buffer matches dims");
    buf.save(path)
        .map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

/// Writes a mask as an 8-bit PNG with values 0 and 255.
pub fn write_mask_png(path: &Path, m: &Mask) -> Result<()> {
    let px: Vec<u8> = m.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(m.width() as u32, m.height() as u32, px).expect("buffer matches dims");
    buf.save(path)
        .map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

pub fn encode_raw_f32(t: &Tensor) -> Vec<u8> {
    let (h, w) = (t.height(), t.width());
    let mut out = Vec::with_capacity(8 + 4 * h * w);
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    for i in 0..h * w {
        out.extend_from_slice(&t.at(i / w, i % w, 0).to_le_bytes());
    }
    out
}

pub fn decode_raw_f32(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 8 {
        return Err(Error::input("raw map shorter than its header"));
    }
    let h = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    let w = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(8));
    if expected != Some(bytes.len()) {
        return Err(Error::input(format!("raw map of {h}x{w} has {} bytes", bytes.len())));
    }
    let data = bytes[8..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Tensor::from_vec(h, w, 1, data)
}

pub fn write_raw_f32(path: &Path, t: &Tensor) -> Result<()> {
    std::fs::write(path, encode_raw_f32(t)).map_err(|e| Error::io(path, e))
}

pub fn read_raw_f32(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw_f32(&bytes).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}
