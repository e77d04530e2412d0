//! Radiograph preparation chain.
//!
//! Every image, whatever its source, goes through the same four steps before
//! it reaches the network:
//!
//! 1. histogram equalization ([`equalize_histogram`]),
//! 2. median filtering with a small square window ([`median_filter`]),
//! 3. bilinear resize to the network input size ([`resize`]),
//! 4. grayscale replication to three channels, scaling to `[0, 1]` and
//!    per-channel mean/std normalization ([`normalize_channels`]).
//!
//! Integer rasters ([`RawImage`]) carry the first two steps; everything after
//! the resize is real valued ([`Image`], planar CHW).
//!
//! Training-time augmentation is applied between steps 3 and 4, which is why
//! [`prepare`] is also available as [`prepare_gray`] followed by [`finalize`].

mod histogram;
pub mod io;
mod median;
mod normalize;
mod resize;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use histogram::{equalization_lut, equalize_histogram};
pub use median::{median_filter, reflect_index};
pub use normalize::{denormalize_channels, normalize_channels};
pub use resize::{resize, resize_to};

pub const IMAGENET_MEANS: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STDS: [f64; 3] = [0.229, 0.224, 0.225];

/// Integer raster, row-major and channel-interleaved, as decoded from disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    width: usize,
    height: usize,
    channels: usize,
    bit_depth: u8,
    data: Vec<u16>,
}

impl RawImage {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        bit_depth: u8,
        data: Vec<u16>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {width}x{height}x{channels}"
            )));
        }
        if !(1..=16).contains(&bit_depth) {
            return Err(Error::invalid(format!("unsupported bit depth {bit_depth}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "expected {} samples for {width}x{height}x{channels}, got {}",
                width * height * channels,
                data.len()
            )));
        }
        let max = ((1u32 << bit_depth) - 1) as u16;
        if let Some(v) = data.iter().find(|&&v| v > max) {
            return Err(Error::invalid(format!(
                "sample {v} exceeds {bit_depth}-bit range"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            bit_depth,
            data,
        })
    }

    /// Single-channel convenience constructor.
    pub fn gray(width: usize, height: usize, bit_depth: u8, data: Vec<u16>) -> Result<Self> {
        Self::new(width, height, 1, bit_depth, data)
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

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn max_value(&self) -> u16 {
        ((1u32 << self.bit_depth) - 1) as u16
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u16> {
        self.data
    }

    /// Sample at column `x`, row `y` of a single-channel image.
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[(y * self.width + x) * self.channels]
    }

    pub(crate) fn require_gray(&self, op: &str) -> Result<()> {
        if self.channels != 1 {
            return Err(Error::invalid(format!(
                "{op} expects a single-channel image, got {} channels",
                self.channels
            )));
        }
        Ok(())
    }

    /// Converts to a real-valued single-channel image without rescaling.
    pub fn to_image(&self) -> Result<Image> {
        self.require_gray("to_image")?;
        Image::new(
            self.height,
            self.width,
            1,
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
    }
}

/// Real-valued planar (channel, row, column) raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "expected {} values for {height}x{width}x{channels}, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Stacks the single channel `n` times.
    pub fn replicate_channels(&self, n: usize) -> Result<Image> {
        if self.channels != 1 {
            return Err(Error::invalid(format!(
                "channel replication expects one channel, got {}",
                self.channels
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() * n);
        for _ in 0..n {
            data.extend_from_slice(&self.data);
        }
        Image::new(self.height, self.width, n, data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BorderPolicy {
    #[default]
    Reflect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepConfig {
    pub target_size: usize,
    pub median_window: usize,
    pub channel_means: [f64; 3],
    pub channel_stds: [f64; 3],
    pub border_policy: BorderPolicy,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            target_size: 224,
            median_window: 3,
            channel_means: IMAGENET_MEANS,
            channel_stds: IMAGENET_STDS,
            border_policy: BorderPolicy::Reflect,
        }
    }
}

impl PrepConfig {
    pub fn with_target_size(mut self, target_size: usize) -> Self {
        self.target_size = target_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_size == 0 {
            return Err(Error::invalid("target_size must be at least 1"));
        }
        if self.median_window == 0 || self.median_window % 2 == 0 {
            return Err(Error::invalid(format!(
                "median_window must be odd and >= 1, got {}",
                self.median_window
            )));
        }
        if self.channel_stds.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("channel_stds must all be positive"));
        }
        if self.channel_means.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("channel_means must be finite"));
        }
        Ok(())
    }
}

/// Intermediate rasters of [`prepare`], kept for stage-by-stage inspection.
#[derive(Debug, Clone)]
pub struct PrepStages {
    pub equalized: RawImage,
    pub filtered: RawImage,
    pub resized: Image,
    pub normalized: Image,
}

/// Equalizes, median filters, then resizes; the result is a single
/// channel scaled to `[0, 1]`.
pub fn prepare_gray(raw: &RawImage, cfg: &PrepConfig) -> Result<Image> {
    cfg.validate()?;
    let equalized = equalize_histogram(raw)?;
    let filtered = median_filter(&equalized, cfg.median_window)?;
    scaled_resize(&filtered, cfg)
}

/// Step 4: replicate to three channels and normalize.
pub fn finalize(gray: &Image, cfg: &PrepConfig) -> Result<Image> {
    let rgb = gray.replicate_channels(3)?;
    normalize_channels(&rgb, cfg.channel_means, cfg.channel_stds)
}

/// Full chain: output is `target_size × target_size × 3`, finite.
pub fn prepare(raw: &RawImage, cfg: &PrepConfig) -> Result<Image> {
    finalize(&prepare_gray(raw, cfg)?, cfg)
}

/// Same as [`prepare`] but keeps every intermediate raster.
pub fn prepare_stages(raw: &RawImage, cfg: &PrepConfig) -> Result<PrepStages> {
    cfg.validate()?;
    let equalized = equalize_histogram(raw)?;
    let filtered = median_filter(&equalized, cfg.median_window)?;
    let resized = scaled_resize(&filtered, cfg)?;
    let normalized = finalize(&resized, cfg)?;
    Ok(PrepStages {
        equalized,
        filtered,
        resized,
        normalized,
    })
}

fn scaled_resize(filtered: &RawImage, cfg: &PrepConfig) -> Result<Image> {
    let max = f64::from(filtered.max_value());
    let mut resized = resize(&filtered.to_image()?, cfg.target_size)?;
    // resize is linear, so scaling after it equals scaling before it
    for v in resized.data_mut() {
        *v /= max;
    }
    Ok(resized)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prepare_output_shape_is_target() {
        let raw = RawImage::gray(37, 51, 8, (0..37 * 51).map(|i| (i % 256) as u16).collect())
            .unwrap();
        let out = prepare(&raw, &PrepConfig::default()).unwrap();
        assert_eq!(out.shape(), (224, 224, 3));
        assert!(out.is_finite());
    }

    #[test]
    fn prepare_constant_mid_gray() {
        let v = 128u16;
        let raw = RawImage::gray(40, 40, 8, vec![v; 1600]).unwrap();
        let cfg = PrepConfig::default();
        let out = prepare(&raw, &cfg).unwrap();
        for c in 0..3 {
            let expected = (f64::from(v) / 255.0 - cfg.channel_means[c]) / cfg.channel_stds[c];
            assert!(out.plane(c).iter().all(|&x| (x - expected).abs() < 1e-12));
        }
    }

    #[test]
    fn prepare_twice_keeps_shape_contract() {
        let raw = RawImage::gray(30, 30, 8, (0..900).map(|i| (i * 7 % 256) as u16).collect())
            .unwrap();
        let cfg = PrepConfig::default();
        let once = prepare(&raw, &cfg).unwrap();
        // re-quantize the first pass and run again; only the contract holds
        let q: Vec<u16> = once
            .plane(0)
            .iter()
            .map(|&x| ((x * cfg.channel_stds[0] + cfg.channel_means[0]) * 255.0).round().clamp(0.0, 255.0) as u16)
            .collect();
        let again = prepare(&RawImage::gray(224, 224, 8, q).unwrap(), &cfg).unwrap();
        assert_eq!(again.shape(), (224, 224, 3));
        assert!(again.is_finite());
    }

    #[test]
    fn prep_config_validation() {
        let mut cfg = PrepConfig::default();
        cfg.median_window = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = PrepConfig::default();
        cfg.channel_stds[1] = 0.0;
        assert!(cfg.validate().is_err());
        assert!(PrepConfig::default().validate().is_ok());
    }

    #[test]
    fn raw_image_rejects_out_of_range() {
        assert!(RawImage::gray(2, 1, 8, vec![0, 256]).is_err());
        assert!(RawImage::gray(0, 1, 8, vec![]).is_err());
    }

    #[test]
    fn stages_match_prepare() {
        let raw = RawImage::gray(20, 20, 12, (0..400).map(|i| (i * 37 % 4096) as u16).collect())
            .unwrap();
        let cfg = PrepConfig::default().with_target_size(16);
        let stages = prepare_stages(&raw, &cfg).unwrap();
        assert_eq!(stages.normalized, prepare(&raw, &cfg).unwrap());
        assert_eq!(stages.resized.shape(), (16, 16, 1));
    }
}
