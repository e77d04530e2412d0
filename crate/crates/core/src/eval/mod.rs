//! Confusion counts, accuracy / specificity / sensitivity, threshold sweeps
//! and cross-validation summaries.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn n(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// A sample is predicted positive when `p >= threshold`.
pub fn confusion(probs: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionCounts> {
    if probs.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} probabilities with {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidInput(format!("threshold {threshold} outside [0, 1]")));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= threshold, y) {
            (true, 1) => c.tp += 1,
            (false, 0) => c.tn += 1,
            (true, 0) => c.fp += 1,
            (false, 1) => c.fn_ += 1,
            (_, y) => return Err(Error::InvalidInput(format!("label must be 0 or 1, got {y}"))),
        }
    }
    Ok(c)
}

/// Metrics of one evaluation. A metric whose denominator is zero is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub specificity: Option<f64>,
    pub sensitivity: Option<f64>,
    pub threshold: f64,
    pub n: usize,
    pub counts: ConfusionCounts,
}

pub fn metrics(counts: ConfusionCounts, threshold: f64) -> Result<MetricsReport> {
    let n = counts.n();
    if n == 0 {
        return Err(Error::InvalidInput("metrics of an empty evaluation".into()));
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    Ok(MetricsReport {
        accuracy: (counts.tp + counts.tn) as f64 / n as f64,
        specificity: ratio(counts.tn, counts.tn + counts.fp),
        sensitivity: ratio(counts.tp, counts.tp + counts.fn_),
        threshold,
        n,
        counts,
    })
}

pub fn evaluate(probs: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsReport> {
    metrics(confusion(probs, labels, threshold)?, threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub specificity: f64,
    pub sensitivity: f64,
    pub sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub best_threshold: f64,
    pub best_sum: f64,
    pub table: Vec<SweepRow>,
}

/// The sweep grid: 0, 0.01, ..., 1.
pub fn sweep_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Evaluates every grid threshold and picks the one maximizing
/// specificity + sensitivity; ties go to the lower threshold.
pub fn sweep_threshold(probs: &[f64], labels: &[u8]) -> Result<Sweep> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::InvalidInput("threshold sweep needs both classes".into()));
    }
    let mut table = Vec::with_capacity(101);
    let mut best: Option<(f64, f64)> = None;
    for t in sweep_grid() {
        let m = evaluate(probs, labels, t)?;
        let (spec, sens) = (m.specificity.unwrap_or(0.0), m.sensitivity.unwrap_or(0.0));
        let sum = spec + sens;
        table.push(SweepRow {
            threshold: t,
            specificity: spec,
            sensitivity: sens,
            sum,
        });
        if best.is_none_or(|(_, s)| sum > s) {
            best = Some((t, sum));
        }
    }
    let (best_threshold, best_sum) = best.expect("grid is not empty");
    Ok(Sweep {
        best_threshold,
        best_sum,
        table,
    })
}

/// Mean and sample standard deviation of one metric across folds; both
/// are `None` when the metric is undefined in any fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub undefined_folds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvSummary {
    pub folds: Vec<MetricsReport>,
    pub accuracy: MetricSummary,
    pub specificity: MetricSummary,
    pub sensitivity: MetricSummary,
}

fn summarize(values: &[Option<f64>]) -> MetricSummary {
    let undefined_folds = values.iter().filter(|v| v.is_none()).count();
    if undefined_folds > 0 {
        return MetricSummary {
            mean: None,
            std: None,
            undefined_folds,
        };
    }
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MetricSummary {
        mean: Some(mean),
        std: Some(std),
        undefined_folds: 0,
    }
}

pub fn cv_aggregate(reports: &[MetricsReport]) -> Result<CvSummary> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("cross-validation summary of zero folds".into()));
    }
    let pick = |f: fn(&MetricsReport) -> Option<f64>| reports.iter().map(f).collect::<Vec<_>>();
    Ok(CvSummary {
        folds: reports.to_vec(),
        accuracy: summarize(&pick(|r| Some(r.accuracy))),
        specificity: summarize(&pick(|r| r.specificity)),
        sensitivity: summarize(&pick(|r| r.sensitivity)),
    })
}

/// One row of a results table: which model, on what data, for what task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub dataset: String,
    pub purpose: String,
    pub accuracy: MetricSummary,
    pub specificity: MetricSummary,
    pub sensitivity: MetricSummary,
}

impl ReportRow {
    pub fn single(model: &str, dataset: &str, purpose: &str, r: &MetricsReport) -> Self {
        let one = |v: Option<f64>| MetricSummary {
            mean: v,
            std: None,
            undefined_folds: usize::from(v.is_none()),
        };
        Self {
            model: model.into(),
            dataset: dataset.into(),
            purpose: purpose.into(),
            accuracy: one(Some(r.accuracy)),
            specificity: one(r.specificity),
            sensitivity: one(r.sensitivity),
        }
    }

    pub fn cv(model: &str, dataset: &str, purpose: &str, s: &CvSummary) -> Self {
        Self {
            model: model.into(),
            dataset: dataset.into(),
            purpose: purpose.into(),
            accuracy: s.accuracy,
            specificity: s.specificity,
            sensitivity: s.sensitivity,
        }
    }
}

/// `84.02%`, `74.43±6.01%` or `undefined`.
pub fn format_metric(m: &MetricSummary) -> String {
    match (m.mean, m.std) {
        (Some(mean), Some(std)) => format!("{:.2}±{:.2}%", mean * 100.0, std * 100.0),
        (Some(mean), None) => format!("{:.2}%", mean * 100.0),
        _ => "undefined".into(),
    }
}

/// Fixed-width text table with columns model, dataset, purpose, accuracy,
/// specificity and sensitivity.
pub fn render_table(rows: &[ReportRow]) -> String {
    let header = ["Model", "Dataset", "Purpose", "Accuracy", "Specificity", "Sensitivity"];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.model.clone(),
                r.dataset.clone(),
                r.purpose.clone(),
                format_metric(&r.accuracy),
                format_metric(&r.specificity),
                format_metric(&r.sensitivity),
            ]
        })
        .collect();
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: &[String]| {
        let parts: Vec<String> = row.iter().zip(&width).map(|(c, &w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", parts.join(" | ").trim_end());
    };
    line(&mut out, &header.map(String::from));
    let _ = writeln!(out, "{}", width.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("-+-"));
    for row in &cells {
        line(&mut out, row);
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x}"))
}

/// CSV with one row per table row; undefined values are written as `undefined`.
pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "model",
        "dataset",
        "purpose",
        "accuracy_mean",
        "accuracy_std",
        "specificity_mean",
        "specificity_std",
        "sensitivity_mean",
        "sensitivity_std",
    ])?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.dataset.clone(),
            r.purpose.clone(),
            opt(r.accuracy.mean),
            opt(r.accuracy.std),
            opt(r.specificity.mean),
            opt(r.specificity.std),
            opt(r.sensitivity.mean),
            opt(r.sensitivity.std),
        ])?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// CSV with one row per fold: counts and metrics.
pub fn write_folds_csv(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fold", "n", "tp", "tn", "fp", "fn", "threshold", "accuracy", "specificity", "sensitivity"])?;
    for (i, r) in reports.iter().enumerate() {
        w.write_record([
            i.to_string(),
            r.n.to_string(),
            r.counts.tp.to_string(),
            r.counts.tn.to_string(),
            r.counts.fp.to_string(),
            r.counts.fn_.to_string(),
            r.threshold.to_string(),
            r.accuracy.to_string(),
            opt(r.specificity),
            opt(r.sensitivity),
        ])?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn write_sweep_csv(path: &Path, sweep: &Sweep) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in &sweep.table {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
