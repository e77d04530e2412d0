//! Sample records, manifests and the labelings that map records to classes.
//!
//! A [`Manifest`] is an immutable list of [`SampleRecord`]s from one source
//! collection. The same record can be labeled for either binary task through
//! [`TaskLabeling`]; splitting and fold planning live in [`split`].

mod chestxray14;
mod jsrt;
pub mod split;
pub mod synthetic;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use chestxray14::{load_chestxray14_manifest, KNOWN_FINDINGS};
pub use jsrt::{load_jsrt_manifest, JSRT_PIXEL_MM};
pub use split::{make_folds, split_grouped, FoldPlan, GroupingKey, SplitSizes, SplitSpec};
pub use synthetic::{generate_synthetic, generate_synthetic_with, SyntheticKind, SyntheticSet, SyntheticSpec};

pub const NODULE: &str = "nodule";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Malignancy {
    Malignant,
    Benign,
    None,
    Unknown,
}

impl fmt::Display for Malignancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Malignancy::Malignant => "malignant",
            Malignancy::Benign => "benign",
            Malignancy::None => "none",
            Malignancy::Unknown => "unknown",
        })
    }
}

impl FromStr for Malignancy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "malignant" => Ok(Malignancy::Malignant),
            "benign" => Ok(Malignancy::Benign),
            "none" | "" | "non-nodule" | "nonnodule" => Ok(Malignancy::None),
            "unknown" => Ok(Malignancy::Unknown),
            other => Err(Error::invalid(format!("unknown malignancy tag `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub image_ref: String,
    pub patient_id: String,
    pub findings: BTreeSet<String>,
    pub malignancy: Malignancy,
    /// Nodule center `(x, y)` in source-resolution pixels.
    pub nodule_center: Option<(f64, f64)>,
    /// Nodule diameter in source-resolution pixels.
    pub nodule_size: Option<f64>,
}

impl SampleRecord {
    pub fn has_finding(&self, tag: &str) -> bool {
        self.findings.contains(tag)
    }

    /// Path of the image, resolving relative refs against `base`.
    pub fn resolve(&self, base: &Path) -> PathBuf {
        let p = Path::new(&self.image_ref);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    /// File stem of the image ref, used to name per-image outputs.
    pub fn image_id(&self) -> String {
        Path::new(&self.image_ref)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.image_ref.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Jsrt,
    Chestxray14,
    Synthetic,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Jsrt => "jsrt",
            Source::Chestxray14 => "chestxray14",
            Source::Synthetic => "synthetic",
        })
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "jsrt" => Ok(Source::Jsrt),
            "chestxray14" => Ok(Source::Chestxray14),
            "synthetic" => Ok(Source::Synthetic),
            other => Err(Error::invalid(format!("unknown manifest source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    source: Source,
    records: Vec<SampleRecord>,
}

const MANIFEST_COLUMNS: [&str; 7] = [
    "image_ref",
    "patient_id",
    "findings",
    "malignancy",
    "nodule_x",
    "nodule_y",
    "nodule_size",
];

impl Manifest {
    pub fn new(source: Source, records: Vec<SampleRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.image_ref.as_str()) {
                return Err(Error::Ingest(format!("duplicate image ref `{}`", r.image_ref)));
            }
        }
        Ok(Self { source, records })
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&SampleRecord> {
        self.records.get(i)
    }

    /// Copy of the manifest restricted to `indices` (in that order).
    pub fn subset(&self, indices: &[usize]) -> Result<Manifest> {
        let records = indices
            .iter()
            .map(|&i| {
                self.records
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Manifest::new(self.source, records)
    }

    /// Rewrites every relative image ref as `base/ref`.
    pub fn rebased(&self, base: &Path) -> Manifest {
        let records = self
            .records
            .iter()
            .map(|r| SampleRecord {
                image_ref: r.resolve(base).to_string_lossy().into_owned(),
                ..r.clone()
            })
            .collect();
        Manifest {
            source: self.source,
            records,
        }
    }

    /// Labels for every record, in order.
    pub fn labels(&self, labeling: &TaskLabeling) -> Result<Vec<u8>> {
        self.records.iter().map(|r| labeling.label(r)).collect()
    }

    /// Serializes as CSV preceded by a `# source=` line.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(MANIFEST_COLUMNS)?;
        for r in &self.records {
            let findings = r.findings.iter().cloned().collect::<Vec<_>>().join("|");
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                r.image_ref.clone(),
                r.patient_id.clone(),
                findings,
                r.malignancy.to_string(),
                opt(r.nodule_center.map(|c| c.0)),
                opt(r.nodule_center.map(|c| c.1)),
                opt(r.nodule_size),
            ])?;
        }
        let body = w
            .into_inner()
            .map_err(|e| Error::io("flushing manifest csv", e.into_error()))?;
        Ok(format!(
            "# source={}\n{}",
            self.source,
            String::from_utf8_lossy(&body)
        ))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()?)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn from_csv_str(text: &str, path: &Path) -> Result<Manifest> {
        let (source, body, offset) = match text.strip_prefix("# source=") {
            Some(rest) => {
                let (line, body) = rest.split_once('\n').unwrap_or((rest, ""));
                (line.trim().parse()?, body, 1)
            }
            None => (Source::Synthetic, text, 0),
        };
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != MANIFEST_COLUMNS {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1 + offset,
                msg: format!("expected header {}", MANIFEST_COLUMNS.join(",")),
            });
        }
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let line = i + 2 + offset;
            let row = row?;
            let perr = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            };
            let num = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse::<f64>()
                        .map(Some)
                        .map_err(|e| perr(format!("bad number `{s}`: {e}")))
                }
            };
            let x = num(&row[4])?;
            let y = num(&row[5])?;
            let nodule_center = match (x, y) {
                (Some(x), Some(y)) => Some((x, y)),
                (None, None) => None,
                _ => return Err(perr("nodule_x and nodule_y must be given together".into())),
            };
            records.push(SampleRecord {
                image_ref: row[0].to_string(),
                patient_id: row[1].to_string(),
                findings: row[2]
                    .split('|')
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect(),
                malignancy: row[3].parse().map_err(|e: Error| perr(e.to_string()))?,
                nodule_center,
                nodule_size: num(&row[6])?,
            });
        }
        Manifest::new(source, records)
    }

    pub fn read_csv(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Manifest::from_csv_str(&text, path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    NoduleVsNonnodule,
    MalignantVsNonmalignant,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::NoduleVsNonnodule => "nodule_vs_nonnodule",
            Task::MalignantVsNonmalignant => "malignant_vs_nonmalignant",
        })
    }
}

/// Maps records to binary labels for one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskLabeling {
    pub task: Task,
}

impl TaskLabeling {
    pub fn new(task: Task) -> Self {
        Self { task }
    }

    pub fn nodule() -> Self {
        Self::new(Task::NoduleVsNonnodule)
    }

    pub fn malignancy() -> Self {
        Self::new(Task::MalignantVsNonmalignant)
    }

    /// `1` for the positive class, `0` otherwise.
    ///
    /// Under the malignancy task, benign and nodule-free records are both
    /// negative; a record whose malignancy is unknown cannot be labeled.
    pub fn label(&self, record: &SampleRecord) -> Result<u8> {
        match self.task {
            Task::NoduleVsNonnodule => Ok(u8::from(
                record.has_finding(NODULE)
                    || matches!(record.malignancy, Malignancy::Malignant | Malignancy::Benign),
            )),
            Task::MalignantVsNonmalignant => match record.malignancy {
                Malignancy::Malignant => Ok(1),
                Malignancy::Benign | Malignancy::None => Ok(0),
                Malignancy::Unknown => Err(Error::Undefined(format!(
                    "record `{}` has unknown malignancy",
                    record.image_ref
                ))),
            },
        }
    }
}

/// `(n_pos, n_neg)` over the given records.
pub fn class_counts<'a>(
    records: impl IntoIterator<Item = &'a SampleRecord>,
    labeling: &TaskLabeling,
) -> Result<(usize, usize)> {
    let mut pos = 0;
    let mut neg = 0;
    for r in records {
        if labeling.label(r)? == 1 {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    Ok((pos, neg))
}
