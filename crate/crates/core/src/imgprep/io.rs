//! Decoding radiographs from disk and writing inspection PNGs.
//!
//! Two source formats are understood:
//!
//! * PNG (8- or 16-bit). Color PNGs are reduced to luma, since a few
//!   published chest X-ray collections ship RGBA files of gray content.
//! * Headerless square rasters of unsigned 16-bit big-endian words holding
//!   12-bit samples (`.IMG`, 2048×2048 for the JSRT collection).

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use super::{Image, RawImage};
use crate::error::{Error, Result};

pub const JSRT_SIDE: usize = 2048;
pub const JSRT_BIT_DEPTH: u8 = 12;

/// Loads any supported radiograph as a single-channel [`RawImage`].
pub fn load_image(path: &Path) -> Result<RawImage> {
    let is_raw = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("img"));
    if is_raw {
        load_raw12(path)
    } else {
        load_png(path)
    }
}

pub fn load_png(path: &Path) -> Result<RawImage> {
    let dynamic = image::open(path)?;
    from_dynamic(dynamic)
}

pub fn from_dynamic(dynamic: DynamicImage) -> Result<RawImage> {
    match dynamic {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            RawImage::gray(
                w as usize,
                h as usize,
                8,
                buf.into_raw().into_iter().map(u16::from).collect(),
            )
        }
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            RawImage::gray(w as usize, h as usize, 16, buf.into_raw())
        }
        other if other.color().bytes_per_pixel() / other.color().channel_count() > 1 => {
            let buf = other.to_luma16();
            let (w, h) = buf.dimensions();
            RawImage::gray(w as usize, h as usize, 16, buf.into_raw())
        }
        other => {
            let buf = other.to_luma8();
            let (w, h) = buf.dimensions();
            RawImage::gray(
                w as usize,
                h as usize,
                8,
                buf.into_raw().into_iter().map(u16::from).collect(),
            )
        }
    }
}

/// Decodes a headerless big-endian 12-bit square raster.
pub fn load_raw12(path: &Path) -> Result<RawImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_raw12(&bytes).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::invalid(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn decode_raw12(bytes: &[u8]) -> Result<RawImage> {
    if bytes.len() % 2 != 0 {
        return Err(Error::invalid("raw raster has an odd byte count"));
    }
    let samples = bytes.len() / 2;
    let side = (samples as f64).sqrt().round() as usize;
    if side == 0 || side * side != samples {
        return Err(Error::invalid(format!(
            "raw raster of {samples} samples is not square"
        )));
    }
    let mask = (1u16 << JSRT_BIT_DEPTH) - 1;
    let data = bytes
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) & mask)
        .collect();
    RawImage::gray(side, side, JSRT_BIT_DEPTH, data)
}

pub fn encode_raw12(img: &RawImage) -> Vec<u8> {
    img.data().iter().flat_map(|v| v.to_be_bytes()).collect()
}

/// Writes a single-channel raw image, as 8-bit PNG when it fits, 16-bit otherwise.
pub fn save_raw_png(img: &RawImage, path: &Path) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    if img.bit_depth() <= 8 {
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_raw(w, h, img.data().iter().map(|&v| v as u8).collect())
                .ok_or_else(|| Error::Shape("png buffer size".into()))?;
        buf.save(path)?;
    } else {
        let shift = 16 - img.bit_depth();
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(w, h, img.data().iter().map(|&v| v << shift).collect())
                .ok_or_else(|| Error::Shape("png buffer size".into()))?;
        buf.save(path)?;
    }
    Ok(())
}

/// Writes the first channel of a real image as an 8-bit PNG, min-max stretched.
pub fn save_image_png(img: &Image, path: &Path) -> Result<()> {
    let plane = img.plane(0);
    let (lo, hi) = plane
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let bytes = plane
        .iter()
        .map(|&v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, bytes)
            .ok_or_else(|| Error::Shape("png buffer size".into()))?;
    buf.save(path)?;
    Ok(())
}
