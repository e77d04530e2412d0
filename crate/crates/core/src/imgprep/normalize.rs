use super::Image;
use crate::error::{Error, Result};

fn check(img: &Image, stds: &[f64; 3]) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::invalid(format!(
            "channel normalization expects 3 channels, got {}",
            img.channels()
        )));
    }
    if let Some(s) = stds.iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::invalid(format!("standard deviation must be positive, got {s}")));
    }
    Ok(())
}

/// Per-channel `(value - mean) / std`.
pub fn normalize_channels(img: &Image, means: [f64; 3], stds: [f64; 3]) -> Result<Image> {
    check(img, &stds)?;
    let n = img.height() * img.width();
    let mut out = img.clone();
    for (c, plane) in out.data_mut().chunks_mut(n).enumerate() {
        for v in plane {
            *v = (*v - means[c]) / stds[c];
        }
    }
    Ok(out)
}

/// Inverse of [`normalize_channels`]: `value * std + mean`.
pub fn denormalize_channels(img: &Image, means: [f64; 3], stds: [f64; 3]) -> Result<Image> {
    check(img, &stds)?;
    let n = img.height() * img.width();
    let mut out = img.clone();
    for (c, plane) in out.data_mut().chunks_mut(n).enumerate() {
        for v in plane {
            *v = *v * stds[c] + means[c];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgprep::{IMAGENET_MEANS, IMAGENET_STDS};
    use proptest::prelude::*;

    #[test]
    fn mean_maps_to_zero() {
        let img = Image::new(1, 1, 3, IMAGENET_MEANS.to_vec()).unwrap();
        let out = normalize_channels(&img, IMAGENET_MEANS, IMAGENET_STDS).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn direct_arithmetic() {
        let img = Image::filled(1, 1, 3, 1.0).unwrap();
        let out = normalize_channels(&img, [0.5; 3], [0.25; 3]).unwrap();
        assert_eq!(out.data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn non_positive_std_rejected() {
        let img = Image::filled(1, 1, 3, 1.0).unwrap();
        assert!(normalize_channels(&img, [0.5; 3], [0.25, 0.0, 0.25]).is_err());
        assert!(normalize_channels(&img, [0.5; 3], [0.25, -1.0, 0.25]).is_err());
    }

    proptest! {
        #[test]
        fn denormalize_inverts(vals in prop::collection::vec(0.0f64..=1.0, 48),
                               means in prop::array::uniform3(0.0f64..1.0),
                               stds in prop::array::uniform3(0.05f64..1.0)) {
            let img = Image::new(4, 4, 3, vals).unwrap();
            let back = denormalize_channels(&normalize_channels(&img, means, stds).unwrap(), means, stds).unwrap();
            for (a, b) in img.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
