//! Seeded desk-scale stand-ins for the chest X-ray collections.
//!
//! Every image is an 8-bit "radiograph": a bright body with two darker
//! elliptical lung fields, overlaid with a zero-mean low-frequency texture
//! plus Gaussian noise. Nodules are Gaussian blobs placed inside a lung field; their centers
//! and sizes are recorded so heatmaps can be checked against ground truth.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Malignancy, Manifest, SampleRecord, Source, NODULE};
use crate::imgprep::RawImage;

const BODY_LEVEL: f64 = 150.0;
const LUNG_LEVEL: f64 = 70.0;
const TEXTURE_AMPLITUDE: f64 = 12.0;
const NOISE_SIGMA: f64 = 10.0;
const BLOB_AMPLITUDE: f64 = 110.0;

/// Blob widths as a fraction of the image side.
const NODULE_SIGMA: f64 = 0.07;
const MALIGNANT_SIGMA: f64 = 0.075;
const BENIGN_SIGMA: f64 = 0.035;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Positives carry a nodule, negatives none (nodule-recognition stage).
    Nodule,
    /// Positives carry a large nodule; negatives alternate between a small
    /// nodule and none (malignancy stage).
    Malignancy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n_pos: usize,
    pub n_neg: usize,
    pub image_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub manifest: Manifest,
    /// One image per manifest record, same order.
    pub images: Vec<RawImage>,
}

/// Nodule-recognition data: `n_pos` images with a blob, `n_neg` without.
pub fn generate_synthetic(n_pos: usize, n_neg: usize, image_size: usize, seed: u64) -> SyntheticSet {
    generate_synthetic_with(SyntheticSpec {
        kind: SyntheticKind::Nodule,
        n_pos,
        n_neg,
        image_size,
        seed,
    })
}

pub fn generate_synthetic_with(spec: SyntheticSpec) -> SyntheticSet {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let s = spec.image_size.max(8);
    let prefix = match spec.kind {
        SyntheticKind::Nodule => "nod",
        SyntheticKind::Malignancy => "mal",
    };
    let mut records = Vec::with_capacity(spec.n_pos + spec.n_neg);
    let mut images = Vec::with_capacity(spec.n_pos + spec.n_neg);
    for i in 0..spec.n_pos + spec.n_neg {
        let positive = i < spec.n_pos;
        let (malignancy, sigma) = match (spec.kind, positive) {
            (SyntheticKind::Nodule, true) => (Malignancy::Unknown, Some(NODULE_SIGMA)),
            (SyntheticKind::Nodule, false) => (Malignancy::None, None),
            (SyntheticKind::Malignancy, true) => (Malignancy::Malignant, Some(MALIGNANT_SIGMA)),
            (SyntheticKind::Malignancy, false) if (i - spec.n_pos) % 2 == 0 => {
                (Malignancy::Benign, Some(BENIGN_SIGMA))
            }
            (SyntheticKind::Malignancy, false) => (Malignancy::None, None),
        };
        let (img, blob) = render(&mut rng, s, sigma.map(|f| f * s as f64));
        let name = format!("{prefix}_{}_{i:05}.png", spec.seed);
        let findings: BTreeSet<String> = if blob.is_some() {
            [NODULE.to_string()].into()
        } else {
            BTreeSet::new()
        };
        records.push(SampleRecord {
            patient_id: format!("{prefix}{}p{i}", spec.seed),
            image_ref: name,
            findings,
            malignancy,
            nodule_center: blob.map(|b| (b.0, b.1)),
            nodule_size: blob.map(|b| 4.0 * b.2),
        });
        images.push(img);
    }
    let manifest = Manifest::new(Source::Synthetic, records).expect("generated refs are unique");
    SyntheticSet { manifest, images }
}

/// Returns the image and, when a blob was drawn, `(x, y, sigma)` in pixels.
fn render(rng: &mut ChaCha8Rng, s: usize, blob_sigma: Option<f64>) -> (RawImage, Option<(f64, f64, f64)>) {
    let sf = s as f64;
    let lungs = [(0.3 * sf, 0.5 * sf), (0.7 * sf, 0.5 * sf)];
    let (rx, ry) = (0.17 * sf, 0.3 * sf);

    // integer frequencies over the full side give an exactly zero-mean texture
    let kx = rng.random_range(1..=3) as f64;
    let ky = rng.random_range(1..=3) as f64;
    let px: f64 = rng.random_range(0.0..TAU);
    let py: f64 = rng.random_range(0.0..TAU);

    let blob = blob_sigma.map(|sigma| {
        let (cx, cy) = lungs[rng.random_range(0..2)];
        let ox: f64 = rng.random_range(-0.45..0.45);
        let oy: f64 = rng.random_range(-0.45..0.45);
        (cx + ox * rx, cy + oy * ry, sigma)
    });

    let noise = Normal::new(0.0, NOISE_SIGMA).expect("positive sigma");
    let mut data = Vec::with_capacity(s * s);
    for y in 0..s {
        for x in 0..s {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let inside = lungs.iter().fold(0.0f64, |acc, &(cx, cy)| {
                let d = ((fx - cx) / rx).powi(2) + ((fy - cy) / ry).powi(2);
                // soft-edged ellipse
                acc.max(1.0 / (1.0 + ((d - 1.0) * 8.0).exp()))
            });
            let mut v = BODY_LEVEL + (LUNG_LEVEL - BODY_LEVEL) * inside;
            v += TEXTURE_AMPLITUDE
                * 0.5
                * ((TAU * kx * x as f64 / sf + px).sin() + (TAU * ky * y as f64 / sf + py).sin());
            if let Some((bx, by, sigma)) = blob {
                let r2 = (fx - bx).powi(2) + (fy - by).powi(2);
                v += BLOB_AMPLITUDE * (-r2 / (2.0 * sigma * sigma)).exp();
            }
            v += noise.sample(rng);
            data.push(v.round().clamp(0.0, 255.0) as u16);
        }
    }
    let img = RawImage::gray(s, s, 8, data).expect("sized by construction");
    (img, blob)
}
