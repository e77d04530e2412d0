//! Training-time augmentation on resized, not yet normalized images.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::imgprep::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentPolicy {
    pub hflip: bool,
    pub max_rotation_degrees: f64,
}

impl AugmentPolicy {
    pub const NONE: AugmentPolicy = AugmentPolicy {
        hflip: false,
        max_rotation_degrees: 0.0,
    };
    pub const HFLIP: AugmentPolicy = AugmentPolicy {
        hflip: true,
        max_rotation_degrees: 0.0,
    };
    pub const HFLIP_ROTATE30: AugmentPolicy = AugmentPolicy {
        hflip: true,
        max_rotation_degrees: 30.0,
    };
}

/// Flips with probability one half when enabled, then rotates by an angle
/// drawn uniformly from `[-max, max]` degrees when `max > 0`.
pub fn augment<R: Rng>(img: &Image, policy: AugmentPolicy, rng: &mut R) -> Image {
    let mut out = img.clone();
    if policy.hflip && rng.random_bool(0.5) {
        out = hflip(&out);
    }
    if policy.max_rotation_degrees > 0.0 {
        let m = policy.max_rotation_degrees;
        let angle = rng.random_range(-m..=m);
        out = rotate(&out, angle);
    }
    out
}

pub fn hflip(img: &Image) -> Image {
    let (h, w, c) = img.shape();
    let mut data = img.data().to_vec();
    for row in data.chunks_mut(w).take(h * c) {
        row.reverse();
    }
    Image::new(h, w, c, data).expect("same shape")
}

/// Rotates counter-clockwise about the image center with bilinear sampling;
/// pixels whose source falls outside the image become 0.
pub fn rotate(img: &Image, degrees: f64) -> Image {
    let (h, w, c) = img.shape();
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut data = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            // inverse map: rotate the destination back by -angle (y axis points down)
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            if sx < -0.5 || sy < -0.5 || sx > w as f64 - 0.5 || sy > h as f64 - 0.5 {
                continue;
            }
            let sx = sx.clamp(0.0, (w - 1) as f64);
            let sy = sy.clamp(0.0, (h - 1) as f64);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            for ch in 0..c {
                let p = img.plane(ch);
                let v = (1.0 - fy) * ((1.0 - fx) * p[y0 * w + x0] + fx * p[y0 * w + x1])
                    + fy * ((1.0 - fx) * p[y1 * w + x0] + fx * p[y1 * w + x1]);
                data[ch * h * w + y * w + x] = v;
            }
        }
    }
    Image::new(h, w, c, data).expect("same shape")
}
