use super::RawImage;
use crate::error::Result;

/// Lookup table of the CDF remap for a single-channel image.
///
/// `lut[v] = round((cdf(v) - cdf_min) / (N - cdf_min) * (2^b - 1))` where
/// `cdf_min` is the cumulative count at the darkest level present. Returns
/// `None` when only one intensity is present (the remap is undefined there).
pub fn equalization_lut(img: &RawImage) -> Result<Option<Vec<u16>>> {
    img.require_gray("histogram equalization")?;
    let levels = usize::from(img.max_value()) + 1;
    let mut hist = vec![0u64; levels];
    for &v in img.data() {
        hist[usize::from(v)] += 1;
    }
    let total = img.data().len() as u64;
    let cdf_min = hist.iter().copied().find(|&h| h > 0).unwrap_or(0);
    let denom = total - cdf_min;
    if denom == 0 {
        return Ok(None);
    }
    let top = u64::from(img.max_value());
    let mut lut = vec![0u16; levels];
    let mut cdf = 0u64;
    for (v, &h) in hist.iter().enumerate() {
        cdf += h;
        // levels below the darkest present one never occur; clamp them to 0
        let num = cdf.saturating_sub(cdf_min);
        // round half up in integer arithmetic
        lut[v] = ((2 * num * top + denom) / (2 * denom)) as u16;
    }
    Ok(Some(lut))
}

/// Spreads intensities over the full range of the image's bit depth.
///
/// A constant image is returned unchanged.
pub fn equalize_histogram(img: &RawImage) -> Result<RawImage> {
    let Some(lut) = equalization_lut(img)? else {
        return Ok(img.clone());
    };
    let data = img.data().iter().map(|&v| lut[usize::from(v)]).collect();
    RawImage::gray(img.width(), img.height(), img.bit_depth(), data)
}
