use super::Image;
use crate::error::{Error, Result};

/// Bilinear resize to `target × target` (pixel-center aligned).
pub fn resize(img: &Image, target: usize) -> Result<Image> {
    resize_to(img, target, target)
}

/// Bilinear resize to an arbitrary `height × width`.
///
/// Sample coordinates follow the half-pixel convention
/// `src = (dst + 0.5) * scale - 0.5`, clamped to the source border, so a
/// same-size resize is the identity.
pub fn resize_to(img: &Image, height: usize, width: usize) -> Result<Image> {
    if height == 0 || width == 0 {
        return Err(Error::invalid(format!(
            "resize target must be at least 1x1, got {height}x{width}"
        )));
    }
    let (sh, sw, channels) = img.shape();
    if (sh, sw) == (height, width) {
        return Ok(img.clone());
    }
    let ys = axis_taps(sh, height);
    let xs = axis_taps(sw, width);
    let mut out = Vec::with_capacity(height * width * channels);
    for c in 0..channels {
        let plane = img.plane(c);
        for &(y0, y1, fy) in &ys {
            let r0 = &plane[y0 * sw..(y0 + 1) * sw];
            let r1 = &plane[y1 * sw..(y1 + 1) * sw];
            for &(x0, x1, fx) in &xs {
                let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
                let bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
                out.push(top + (bottom - top) * fy);
            }
        }
    }
    Image::new(height, width, channels, out)
}

fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}
