use super::RawImage;
use crate::error::{Error, Result};

/// Mirror index `i` (possibly out of range) into `0..n` without repeating the
/// edge sample: `-1 -> 1`, `n -> n - 2`.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Square-window median filter with reflect padding.
pub fn median_filter(img: &RawImage, window: usize) -> Result<RawImage> {
    img.require_gray("median filter")?;
    if window == 0 || window % 2 == 0 {
        return Err(Error::invalid(format!(
            "median window must be odd, got {window}"
        )));
    }
    if window == 1 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    let r = (window / 2) as isize;
    let src = img.data();

    // precompute reflected coordinates once per axis
    let cols: Vec<Vec<usize>> = (0..w as isize)
        .map(|x| (-r..=r).map(|d| reflect_index(x + d, w)).collect())
        .collect();
    let rows: Vec<Vec<usize>> = (0..h as isize)
        .map(|y| (-r..=r).map(|d| reflect_index(y + d, h)).collect())
        .collect();

    let mid = window * window / 2;
    let mut buf = Vec::with_capacity(window * window);
    let mut out = Vec::with_capacity(w * h);
    for row in &rows {
        for col in &cols {
            buf.clear();
            for &yy in row {
                let base = yy * w;
                buf.extend(col.iter().map(|&xx| src[base + xx]));
            }
            let (_, m, _) = buf.select_nth_unstable(mid);
            out.push(*m);
        }
    }
    RawImage::gray(w, h, img.bit_depth(), out)
}
