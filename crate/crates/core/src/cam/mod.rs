//! Class activation maps and heatmap overlays.
//!
//! The raw map is the head-weighted sum of the final feature maps, without
//! the head bias. With a global-average-pool head its spatial mean plus the
//! bias is exactly the model logit.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgprep::resize_to;
use crate::imgprep::{Image, RawImage};
use crate::model::{ClassifierModel, FeatureMaps};

pub const DEFAULT_ALPHA: f64 = 0.4;
pub const CIRCLE_COLOR: [u8; 3] = [0, 0, 255];

/// Anchors of the display ramp at t = 0, 0.25, 0.5, 0.75, 1 (viridis).
const RAMP: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    pub height: usize,
    pub width: usize,
    pub raw: Vec<f64>,
}

/// `raw = Σ_k w_k f_k`
pub fn compute_cam(features: &FeatureMaps, weights: &[f64]) -> Result<ActivationMap> {
    if weights.len() != features.channels {
        return Err(Error::Shape(format!(
            "{} head weights for {} feature maps",
            weights.len(),
            features.channels
        )));
    }
    if features.maps.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature map values".into()));
    }
    let n = features.height * features.width;
    let mut raw = vec![0.0; n];
    for (k, &w) in weights.iter().enumerate() {
        for (r, &f) in raw.iter_mut().zip(features.map(k)) {
            *r += w * f;
        }
    }
    Ok(ActivationMap {
        height: features.height,
        width: features.width,
        raw,
    })
}

/// Min-max normalization; a constant map becomes all zeros.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = min_max(values);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; values.len()]
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

impl ActivationMap {
    pub fn normalized(&self) -> Vec<f64> {
        normalize(&self.raw)
    }

    pub fn mean(&self) -> f64 {
        self.raw.iter().sum::<f64>() / self.raw.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        min_max(&self.raw)
    }

    /// Bilinear upsampling of the raw map to `height × width`.
    pub fn upsampled(&self, height: usize, width: usize) -> Result<Image> {
        let img = Image::new(self.height, self.width, 1, self.raw.clone())?;
        resize_to(&img, height, width)
    }

    /// `(x, y)` of the maximum of the upsampled map; the first in row-major
    /// order on ties.
    pub fn argmax_upsampled(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let up = self.upsampled(height, width)?;
        let mut best = (0, f64::NEG_INFINITY);
        for (i, &v) in up.data().iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        Ok((best.0 % width, best.0 / width))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    /// Spatial mean of the raw map plus the head bias.
    pub cam_side: f64,
    pub logit: f64,
}

impl IdentityCheck {
    pub fn error(&self) -> f64 {
        (self.cam_side - self.logit).abs()
    }

    pub fn ensure(&self, tolerance: f64) -> Result<()> {
        if self.error() <= tolerance {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "CAM identity violated: mean(CAM) + bias = {}, logit = {}",
                self.cam_side, self.logit
            )))
        }
    }
}

/// Compares the map mean plus bias with the model's inference logit.
pub fn cam_logit_identity(model: &ClassifierModel, image: &Image) -> Result<IdentityCheck> {
    let feats = model.extract_features(image)?;
    let head = model.head_weights();
    let cam = compute_cam(&feats, &head.weights)?;
    let logit = model.logits(&ClassifierModel::batch(std::slice::from_ref(image))?)?[0];
    Ok(IdentityCheck {
        cam_side: cam.mean() + head.bias,
        logit,
    })
}

/// Maps `t` in `[0, 1]` through the display ramp.
pub fn colormap(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (RAMP.len() - 1) as f64;
    let i = (pos.floor() as usize).min(RAMP.len() - 2);
    let f = pos - i as f64;
    let mut out = [0u8; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o = (RAMP[i][c] * (1.0 - f) + RAMP[i + 1][c] * f).round() as u8;
    }
    out
}

/// A ground-truth marker in display pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

/// 8-bit display levels of a raw image, scaled by its bit depth.
pub fn display_gray(base: &RawImage) -> Result<Vec<u8>> {
    if base.channels() != 1 {
        return Err(Error::InvalidInput("overlay base must be single-channel".into()));
    }
    let max = f64::from(base.max_value());
    Ok(base
        .data()
        .iter()
        .map(|&v| (f64::from(v) / max * 255.0).round() as u8)
        .collect())
}

/// Upsamples the normalized map to the base resolution, colors it, blends
/// it over the grayscale base with weight `alpha` and draws `circle`.
pub fn render_overlay(base: &RawImage, map: &ActivationMap, alpha: f64, circle: Option<Circle>) -> Result<RgbImage> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside [0, 1]")));
    }
    let (w, h) = (base.width(), base.height());
    let gray = display_gray(base)?;
    let heat = normalize(map.upsampled(h, w)?.data());
    let mut out = RgbImage::new(w as u32, h as u32);
    for (i, px) in out.pixels_mut().enumerate() {
        let g = f64::from(gray[i]);
        let c = colormap(heat[i]);
        *px = Rgb(c.map(|v| ((1.0 - alpha) * g + alpha * f64::from(v)).round() as u8));
    }
    if let Some(c) = circle {
        draw_circle(&mut out, c);
    }
    Ok(out)
}

/// Draws a ring; a center outside the image is clamped to its border.
pub fn draw_circle(img: &mut RgbImage, circle: Circle) {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let cx = circle.cx.clamp(0.0, w - 1.0);
    let cy = circle.cy.clamp(0.0, h - 1.0);
    if cx != circle.cx || cy != circle.cy {
        log::warn!(
            "circle center ({}, {}) outside the {w}x{h} image; clamped to ({cx}, {cy})",
            circle.cx,
            circle.cy
        );
    }
    let r = circle.radius.max(1.0);
    let thickness = (w.max(h) / 256.0).max(1.0);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            if (d - r).abs() <= thickness / 2.0 + 0.5 {
                img.put_pixel(x, y, Rgb(CIRCLE_COLOR));
            }
        }
    }
}

/// `{image_id}_{stage}_cam.png`
pub fn overlay_name(image_id: &str, stage: &str) -> String {
    format!("{image_id}_{stage}_cam.png")
}

/// Sidecar row describing one rendered map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CamRecord {
    pub image_id: String,
    pub stage: String,
    pub argmax_x: usize,
    pub argmax_y: usize,
    pub raw_min: f64,
    pub raw_max: f64,
    pub raw_mean: f64,
}

impl CamRecord {
    pub fn new(image_id: &str, stage: &str, map: &ActivationMap, display: (usize, usize)) -> Result<Self> {
        let (argmax_x, argmax_y) = map.argmax_upsampled(display.1, display.0)?;
        let (raw_min, raw_max) = map.min_max();
        Ok(Self {
            image_id: image_id.into(),
            stage: stage.into(),
            argmax_x,
            argmax_y,
            raw_min,
            raw_max,
            raw_mean: map.mean(),
        })
    }
}

pub fn save_overlay(dir: &Path, image_id: &str, stage: &str, img: &RgbImage) -> Result<PathBuf> {
    let path = dir.join(overlay_name(image_id, stage));
    img.save(&path)?;
    Ok(path)
}

pub fn write_sidecar(path: &Path, records: &[CamRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maps(k: usize, h: usize, w: usize, data: Vec<f64>) -> FeatureMaps {
        FeatureMaps {
            channels: k,
            height: h,
            width: w,
            maps: data,
            source_input_size: 0,
        }
    }

    #[test]
    fn single_map_identity_and_zero_weights() {
        let f = maps(1, 2, 2, vec![1.0, -2.0, 3.0, 0.5]);
        assert_eq!(compute_cam(&f, &[1.0]).unwrap().raw, f.maps);
        let f = maps(2, 1, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(compute_cam(&f, &[0.0, 0.0]).unwrap().raw, vec![0.0, 0.0]);
        assert!(compute_cam(&f, &[1.0]).is_err());
    }

    #[test]
    fn hand_computed_three_channel_sum() {
        let f = maps(
            3,
            2,
            2,
            vec![
                1.0, 2.0, 3.0, 4.0, //
                0.0, 1.0, 0.0, 1.0, //
                -1.0, 0.5, 2.0, 0.0,
            ],
        );
        let cam = compute_cam(&f, &[2.0, -1.0, 0.5]).unwrap();
        // 2*[1,2,3,4] - [0,1,0,1] + 0.5*[-1,0.5,2,0]
        assert_eq!(cam.raw, vec![1.5, 3.25, 7.0, 7.0]);
    }

    #[test]
    fn normalization_range() {
        let n = normalize(&[2.0, 4.0, 3.0]);
        assert_eq!(n, vec![0.0, 1.0, 0.5]);
        assert_eq!(normalize(&[3.0; 4]), vec![0.0; 4]);
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), [68, 1, 84]);
        assert_eq!(colormap(1.0), [253, 231, 37]);
        assert_eq!(colormap(0.5), [33, 145, 140]);
    }

    fn base() -> RawImage {
        RawImage::gray(6, 4, 8, (0..24).map(|i| (i * 10) as u16).collect()).unwrap()
    }

    #[test]
    fn alpha_zero_is_base() {
        let map = ActivationMap { height: 2, width: 2, raw: vec![0.0, 1.0, 2.0, 3.0] };
        let out = render_overlay(&base(), &map, 0.0, None).unwrap();
        assert_eq!((out.width(), out.height()), (6, 4));
        for (i, px) in out.pixels().enumerate() {
            let g = (i * 10) as u8;
            assert_eq!(px.0, [g, g, g]);
        }
    }

    #[test]
    fn constant_map_uniform_tint() {
        let map = ActivationMap { height: 2, width: 2, raw: vec![5.0; 4] };
        let b = RawImage::gray(5, 5, 8, vec![100; 25]).unwrap();
        let out = render_overlay(&b, &map, 0.4, None).unwrap();
        let first = out.get_pixel(0, 0).0;
        assert!(out.pixels().all(|p| p.0 == first));
        assert_ne!(first, [100, 100, 100]);
    }

    #[test]
    fn circle_drawn_and_clamped() {
        let map = ActivationMap { height: 1, width: 1, raw: vec![0.0] };
        let b = RawImage::gray(32, 32, 8, vec![0; 1024]).unwrap();
        let out = render_overlay(&b, &map, 0.0, Some(Circle { cx: 16.0, cy: 16.0, radius: 5.0 })).unwrap();
        assert_eq!(out.get_pixel(21, 16).0, CIRCLE_COLOR);
        assert_eq!(out.get_pixel(16, 16).0, [0, 0, 0]);
        let out = render_overlay(&b, &map, 0.0, Some(Circle { cx: 100.0, cy: -5.0, radius: 3.0 })).unwrap();
        assert_eq!(out.get_pixel(31, 3).0, CIRCLE_COLOR);
    }

    #[test]
    fn argmax_of_peaked_map() {
        let mut raw = vec![0.0; 16];
        raw[4 * 1 + 2] = 1.0; // row 1, column 2
        let map = ActivationMap { height: 4, width: 4, raw };
        let (x, y) = map.argmax_upsampled(32, 32).unwrap();
        // the source cell spans [16, 24) x [8, 16) at 8x scale
        assert!((16..24).contains(&x) && (8..16).contains(&y), "({x}, {y})");
    }
}
