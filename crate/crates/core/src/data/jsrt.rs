use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use super::{Malignancy, Manifest, SampleRecord, Source, NODULE};
use crate::error::{Error, Result};
use crate::imgprep::io::JSRT_SIDE;

/// Detector pitch of the JSRT films, millimetres per pixel.
pub const JSRT_PIXEL_MM: f64 = 0.175;

/// Reads a JSRT metadata listing and checks that every image exists under `root`.
///
/// Whitespace-separated rows; `#` starts a comment. Two layouts are accepted:
///
/// * `filename [malignancy [x y [size_px]]]` where malignancy is one of
///   `malignant`, `benign`, `none`; a bare filename is a nodule-free image.
/// * the layout of the collection's own clinical listing:
///   `filename subtlety size_mm age sex x y malignant|benign ...`.
pub fn load_jsrt_manifest(root: &Path, metadata: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(metadata)
        .map_err(|e| Error::io(format!("reading {}", metadata.display()), e))?;
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse {
            path: metadata.to_path_buf(),
            line: i + 1,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let record = parse_row(&fields).map_err(perr)?;
        records.push(record);
    }
    let missing: Vec<_> = records
        .iter()
        .map(|r| root.join(&r.image_ref))
        .filter(|p| !p.exists())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    let records = records
        .into_iter()
        .map(|r| SampleRecord {
            image_ref: root.join(&r.image_ref).to_string_lossy().into_owned(),
            ..r
        })
        .collect();
    Manifest::new(Source::Jsrt, records)
}

fn parse_row(fields: &[&str]) -> std::result::Result<SampleRecord, String> {
    let name = fields[0];
    let rest = &fields[1..];
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("bad number `{s}`: {e}"));

    let (malignancy, center, size) = if rest.is_empty() {
        (Malignancy::None, None, None)
    } else if rest[0].parse::<f64>().is_ok() {
        // clinical layout
        if rest.len() < 7 {
            return Err(format!("expected at least 8 fields, got {}", fields.len()));
        }
        let size_mm = num(rest[1])?;
        let center = (num(rest[4])?, num(rest[5])?);
        let malignancy = rest[6].parse::<Malignancy>().map_err(|e| e.to_string())?;
        (malignancy, Some(center), Some(size_mm / JSRT_PIXEL_MM))
    } else {
        let malignancy = rest[0].parse::<Malignancy>().map_err(|e| e.to_string())?;
        let center = match rest.len() {
            1 => None,
            2 => return Err("nodule x given without y".into()),
            _ => Some((num(rest[1])?, num(rest[2])?)),
        };
        let size = rest.get(3).map(|s| num(s)).transpose()?;
        (malignancy, center, size)
    };

    if let Some((x, y)) = center {
        let side = JSRT_SIDE as f64;
        if !(0.0..side).contains(&x) || !(0.0..side).contains(&y) {
            return Err(format!("nodule center ({x}, {y}) outside the {JSRT_SIDE}-pixel film"));
        }
    }
    if malignancy == Malignancy::Unknown {
        return Err("JSRT rows must state malignant, benign or none".into());
    }
    let findings: BTreeSet<String> = match malignancy {
        Malignancy::Malignant | Malignancy::Benign => [NODULE.to_string()].into(),
        _ => BTreeSet::new(),
    };
    let patient_id = Path::new(name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| name.to_string());
    Ok(SampleRecord {
        image_ref: name.to_string(),
        patient_id,
        findings,
        malignancy,
        nodule_center: center,
        nodule_size: size,
    })
}
