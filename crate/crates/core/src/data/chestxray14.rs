use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::path::Path;

use super::{Malignancy, Manifest, SampleRecord, Source, NODULE};
use crate::error::{Error, Result};

/// The fourteen pathology tags, normalized to lowercase.
pub const KNOWN_FINDINGS: [&str; 14] = [
    "atelectasis",
    "cardiomegaly",
    "consolidation",
    "edema",
    "effusion",
    "emphysema",
    "fibrosis",
    "hernia",
    "infiltration",
    "mass",
    "nodule",
    "pleural_thickening",
    "pneumonia",
    "pneumothorax",
];

const NO_FINDING: &str = "No Finding";

/// Reads a `Data_Entry_2017.csv`-shaped label file.
///
/// Columns are located by header name (`Image Index`, `Finding Labels`,
/// `Patient ID`); others are ignored. Finding labels are pipe-separated.
/// Unrecognized tokens are kept verbatim with a warning. Image files are not
/// touched here.
pub fn load_chestxray14_manifest(root: &Path, labels_csv: &Path) -> Result<Manifest> {
    let file = File::open(labels_csv)
        .map_err(|e| Error::io(format!("opening {}", labels_csv.display()), e))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse {
                path: labels_csv.to_path_buf(),
                line: 1,
                msg: format!("missing column `{name}`"),
            })
    };
    let (c_img, c_lab, c_pat) = (col("Image Index")?, col("Finding Labels")?, col("Patient ID")?);

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let field = |c: usize| {
            row.get(c).map(str::trim).ok_or_else(|| Error::Parse {
                path: labels_csv.to_path_buf(),
                line,
                msg: format!("row has only {} fields", row.len()),
            })
        };
        let name = field(c_img)?;
        if !seen.insert(name.to_string()) {
            return Err(Error::Ingest(format!(
                "duplicate image `{name}` at {}:{line}",
                labels_csv.display()
            )));
        }
        let findings = parse_findings(field(c_lab)?);
        let malignancy = if findings.contains(NODULE) {
            Malignancy::Unknown
        } else {
            Malignancy::None
        };
        records.push(SampleRecord {
            image_ref: root.join(name).to_string_lossy().into_owned(),
            patient_id: field(c_pat)?.to_string(),
            findings,
            malignancy,
            nodule_center: None,
            nodule_size: None,
        });
    }
    Manifest::new(Source::Chestxray14, records)
}

fn parse_findings(labels: &str) -> BTreeSet<String> {
    labels
        .split('|')
        .map(str::trim)
        .filter(|t| !t.is_empty() && *t != NO_FINDING)
        .map(|t| {
            let norm = t.to_ascii_lowercase().replace(' ', "_");
            if KNOWN_FINDINGS.contains(&norm.as_str()) {
                norm
            } else {
                log::warn!("unknown finding label `{t}` kept verbatim");
                t.to_string()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TaskLabeling;
    use std::fs;

    const HEADER: &str = "Image Index,Finding Labels,Follow-up #,Patient ID,Patient Age,Patient Gender,View Position,OriginalImage[Width,Height],OriginalImagePixelSpacing[x,y]\n";

    fn write(dir: &Path, body: &str) -> std::path::PathBuf {
        let p = dir.join("Data_Entry_2017.csv");
        fs::write(&p, format!("{HEADER}{body}")).unwrap();
        p
    }

    #[test]
    fn parses_labels_and_patients() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "00000001_000.png,Nodule|Effusion,0,1,58,M,PA,2682,2749,0.143,0.143\n\
             00000002_000.png,No Finding,0,2,81,M,PA,2500,2048,0.168,0.168\n\
             00000003_000.png,Pleural_Thickening|Odd Thing,0,2,81,M,PA,2500,2048,0.168,0.168\n",
        );
        let m = load_chestxray14_manifest(Path::new("/data/images"), &p).unwrap();
        assert_eq!(m.len(), 3);
        let r0 = &m.records()[0];
        assert_eq!(
            r0.findings,
            ["effusion", "nodule"].iter().map(|s| s.to_string()).collect()
        );
        assert_eq!(r0.patient_id, "1");
        assert_eq!(r0.image_ref, "/data/images/00000001_000.png");
        let nod = TaskLabeling::nodule();
        assert_eq!(nod.label(r0).unwrap(), 1);
        assert_eq!(nod.label(&m.records()[1]).unwrap(), 0);
        assert!(m.records()[1].findings.is_empty());
        assert!(m.records()[2].findings.contains("Odd Thing"));
        assert!(m.records()[2].findings.contains("pleural_thickening"));
    }

    #[test]
    fn duplicate_filename_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.png,No Finding,0,1,1,M,PA,1,1,1,1\na.png,Nodule,0,1,1,M,PA,1,1,1,1\n",
        );
        assert!(matches!(
            load_chestxray14_manifest(dir.path(), &p),
            Err(Error::Ingest(_))
        ));
    }

    #[test]
    fn missing_column_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "Image Index,Patient ID\na.png,1\n").unwrap();
        assert!(matches!(
            load_chestxray14_manifest(dir.path(), &p),
            Err(Error::Parse { .. })
        ));
    }
}
