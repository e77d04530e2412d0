//! `eval`: test metrics plus an optional threshold sweep.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cxrcascade::eval::{
    cv_aggregate, evaluate, render_table, sweep_threshold, write_folds_csv, write_report_csv, write_sweep_csv,
    MetricsReport, ReportRow,
};
use cxrcascade::train::{predict, Checkpoint};
use serde::Serialize;

use crate::args::EvalArgs;
use crate::datasets::purpose;
use crate::selection::select;
use crate::{Context as RunContext, RunReport};

const BATCH: usize = 32;

#[derive(Serialize)]
struct PredictionRow<'a> {
    checkpoint: &'a str,
    image_id: String,
    label: u8,
    probability: f64,
}

fn label_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn run(args: &EvalArgs, ctx: &RunContext) -> Result<RunReport> {
    if let Some(t) = args.threshold {
        if !(0.0..=1.0).contains(&t) {
            bail!("--threshold {t} outside [0, 1]");
        }
    }
    let out = &ctx.out;
    let mut report = RunReport::default();
    let mut rows = Vec::new();
    let mut groups: BTreeMap<String, (String, String, Vec<MetricsReport>)> = BTreeMap::new();
    let mut predictions = csv::Writer::from_path(out.join("predictions.csv"))?;

    for path in &args.checkpoint {
        let ck = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
        let label = label_of(path);
        report.provenance.insert(label.clone(), ck.hash().to_string());
        let sel = select(&args.selection, &ck, ctx)?;
        if sel.collection.task != ck.meta.task {
            if !args.force {
                bail!(
                    "checkpoint {} was trained for {} but {} is labeled for {}; pass --force to evaluate anyway",
                    path.display(),
                    ck.meta.task,
                    sel.description,
                    sel.collection.task
                );
            }
            log::warn!("evaluating a {} checkpoint on {} data", ck.meta.task, sel.collection.task);
        }
        report
            .datasets
            .insert(sel.collection.dataset.clone(), sel.collection.digest()?);
        let set = sel.collection.select(&sel.indices)?;
        let probs = predict(&ck.model, &set, &ck.meta.prep, BATCH)?;
        let threshold = args
            .threshold
            .unwrap_or_else(|| ck.meta.stage.map_or(0.5, |s| s.eval_threshold()));
        let m = evaluate(&probs, set.labels(), threshold)?;
        for (j, (&p, &y)) in probs.iter().zip(set.labels()).enumerate() {
            predictions.serialize(PredictionRow {
                checkpoint: &label,
                image_id: set.id(j),
                label: y,
                probability: p,
            })?;
        }
        if args.sweep {
            let sweep = sweep_threshold(&probs, set.labels())?;
            write_sweep_csv(&out.join(format!("sweep_{label}.csv")), &sweep)?;
            println!(
                "{label}: best threshold {:.2} (specificity + sensitivity = {:.4})",
                sweep.best_threshold, sweep.best_sum
            );
        }
        let what = purpose(sel.collection.task);
        rows.push(ReportRow::single(&label, &sel.description, what, &m));
        let stage = ck.meta.stage.map_or_else(|| "model".to_string(), |s| s.to_string());
        groups
            .entry(stage)
            .or_insert_with(|| (sel.collection.dataset.clone(), what.to_string(), Vec::new()))
            .2
            .push(m);
    }
    predictions.flush()?;

    for (stage, (dataset, what, reports)) in &groups {
        if reports.len() > 1 {
            write_folds_csv(&out.join(format!("folds_{stage}.csv")), reports)?;
            rows.push(ReportRow::cv(&format!("{stage} (CV)"), dataset, what, &cv_aggregate(reports)?));
        }
    }
    write_report_csv(&out.join("report.csv"), &rows)?;
    println!("{}", render_table(&rows));
    Ok(report)
}
