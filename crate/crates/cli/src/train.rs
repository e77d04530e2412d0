//! `train`: stages A, B, C or the whole cascade, with test-split metrics.

use std::path::Path;

use anyhow::{bail, Context, Result};
use cxrcascade::data::Task;
use cxrcascade::desk::desk_base;
use cxrcascade::eval::{cv_aggregate, evaluate, render_table, write_folds_csv, write_report_csv, MetricsReport, ReportRow};
use cxrcascade::imgprep::PrepConfig;
use cxrcascade::model::{build_model, Init};
use cxrcascade::train::{
    checkpoint_name, predict, train_stage, train_stage_c, write_stage, Checkpoint, LabeledSet, Stage, StageOutcome,
    StageSpec, TrainConfig,
};

use crate::args::{StageArg, TrainArgs};
use crate::datasets::{load_desk, load_full, Experiment};
use crate::{Context as RunContext, RunReport};

struct Plan {
    a: bool,
    b: bool,
    c: bool,
}

fn plan(stage: StageArg, ctx: &RunContext) -> Plan {
    match stage {
        StageArg::A => Plan { a: true, b: false, c: false },
        StageArg::B => Plan { a: false, b: true, c: false },
        StageArg::C => Plan { a: false, b: false, c: true },
        StageArg::Cascade => {
            let s = &ctx.cfg.stages;
            Plan { a: s.a, b: s.b, c: s.c }
        }
    }
}

fn test_metrics(ck: &Checkpoint, set: &LabeledSet, prep: &PrepConfig, batch: usize) -> Result<MetricsReport> {
    let stage = ck.meta.stage.context("trained checkpoint without stage")?;
    let p = predict(&ck.model, set, prep, batch)?;
    Ok(evaluate(&p, set.labels(), stage.eval_threshold())?)
}

fn load_stage_a(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        bail!(
            "stage C needs the stage-A checkpoint, but {} does not exist; run `cxrcascade train --stage A` first \
             (or pass --stage-a <checkpoint>)",
            path.display()
        );
    }
    let ck = Checkpoint::load(path).with_context(|| format!("loading stage-A checkpoint {}", path.display()))?;
    if ck.meta.stage != Some(Stage::A) {
        bail!("{} is not a stage-A checkpoint (stage {:?})", path.display(), ck.meta.stage);
    }
    Ok(ck)
}

pub fn run(args: &TrainArgs, ctx: &RunContext) -> Result<RunReport> {
    let cfg = &ctx.cfg;
    let plan = plan(args.stage, ctx);
    let out = &ctx.out;
    let stage_a_path = args.stage_a.clone().unwrap_or_else(|| out.join(checkpoint_name(Stage::A, None)));
    // a stage-A checkpoint is required before any data is read
    let prior_a = if plan.c && !plan.a { Some(load_stage_a(&stage_a_path)?) } else { None };

    let (exp, base, cfg_a, cfg_bc, prep): (Experiment, Checkpoint, TrainConfig, TrainConfig, PrepConfig) = if ctx.desk {
        (
            load_desk(&cfg.desk)?,
            desk_base(&cfg.desk)?,
            cfg.desk.stage_a.clone(),
            cfg.desk.stage_bc.clone(),
            cfg.desk.prep(),
        )
    } else {
        let exp = load_full(cfg, plan.a, plan.b || plan.c)?;
        let model = build_model(&cfg.backbone, Init::PretrainedImagenet { head_seed: cfg.seed })?;
        let mut base = Checkpoint::new(model, cfg.prep.clone(), Task::NoduleVsNonnodule);
        base.meta.seed = Some(cfg.seed);
        (exp, base, cfg.stage_a.clone(), cfg.stage_bc.clone(), cfg.prep.clone())
    };
    exp.write_plans(out)?;

    let mut report = RunReport::default();
    for (name, digest) in exp.digests()? {
        report.datasets.insert(name, digest);
    }
    report.provenance.insert("base".into(), base.hash().to_string());
    let mut rows = Vec::new();

    let finish = |o: &StageOutcome, report: &mut RunReport| -> Result<()> {
        write_stage(out, o)?;
        let m = &o.checkpoint.meta;
        let key = checkpoint_name(m.stage.context("stage missing")?, m.fold);
        report.provenance.insert(key, o.checkpoint.hash().to_string());
        Ok(())
    };

    let a = if plan.a {
        let s1 = exp.stage1()?;
        let o = train_stage(&base, &StageSpec::a(), &s1.part_train()?, &s1.part_validation()?, &cfg_a)?;
        finish(&o, &mut report)?;
        let m = test_metrics(&o.checkpoint, &s1.part(crate::datasets::Part::Test)?, &prep, cfg_a.batch_size)?;
        rows.push(ReportRow::single("A", &s1.collection.dataset, s1.collection.purpose(), &m));
        Some(o.checkpoint)
    } else {
        prior_a
    };

    if plan.b || plan.c {
        let s2 = exp.stage2()?;
        let folds = s2.fold_data()?;
        let mut per_stage: Vec<(Stage, Vec<MetricsReport>)> = Vec::new();
        if plan.b {
            per_stage.push((Stage::B, Vec::new()));
        }
        if plan.c {
            per_stage.push((Stage::C, Vec::new()));
        }
        for (f, data) in folds.iter().enumerate() {
            for (stage, reports) in per_stage.iter_mut() {
                let o = match stage {
                    Stage::B => train_stage(&base, &StageSpec::b(f), &data.train, &data.validation, &cfg_bc)?,
                    _ => train_stage_c(a.as_ref(), f, data, &cfg_bc)?,
                };
                finish(&o, &mut report)?;
                reports.push(test_metrics(&o.checkpoint, &data.test, &prep, cfg_bc.batch_size)?);
            }
        }
        for (stage, reports) in &per_stage {
            write_folds_csv(&out.join(format!("folds_{stage}.csv")), reports)?;
            let summary = cv_aggregate(reports)?;
            rows.push(ReportRow::cv(&stage.to_string(), &s2.collection.dataset, s2.collection.purpose(), &summary));
        }
    }

    write_report_csv(&out.join("report.csv"), &rows)?;
    println!("{}", render_table(&rows));
    Ok(report)
}
