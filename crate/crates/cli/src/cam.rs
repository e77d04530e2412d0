//! `cam`: heatmap overlays and a sidecar CSV for a checkpoint.

use std::path::PathBuf;

use anyhow::{Context, Result};
use cxrcascade::cam::{compute_cam, render_overlay, save_overlay, write_sidecar, CamRecord, Circle};
use cxrcascade::data::SampleRecord;
use cxrcascade::imgprep::io::load_image;
use cxrcascade::imgprep::{prepare, resize_to, RawImage};
use cxrcascade::train::Checkpoint;
use rayon::prelude::*;

use crate::args::CamArgs;
use crate::datasets::Collection;
use crate::failures::{self, Failure};
use crate::selection::select;
use crate::{Context as RunContext, RunReport};

pub const SIDECAR: &str = "cam.csv";

enum Item<'a> {
    File(PathBuf),
    Record(&'a Collection, usize),
}

impl Item<'_> {
    fn name(&self) -> String {
        match self {
            Item::File(p) => p.display().to_string(),
            Item::Record(c, i) => c.record(*i).image_ref.clone(),
        }
    }

    fn load(&self) -> Result<(String, RawImage, Option<&SampleRecord>)> {
        Ok(match self {
            Item::File(p) => {
                let id = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "image".into());
                (id, load_image(p)?, None)
            }
            Item::Record(c, i) => {
                let r = c.record(*i);
                (r.image_id(), c.raw(*i)?, Some(r))
            }
        })
    }
}

/// Bilinear resize of a gray raster, keeping its bit depth.
fn resize_raw(raw: &RawImage, side: usize) -> Result<RawImage> {
    let img = resize_to(&raw.to_image()?, side, side)?;
    let max = f64::from(raw.max_value());
    let data = img.data().iter().map(|v| v.round().clamp(0.0, max) as u16).collect();
    Ok(RawImage::gray(side, side, raw.bit_depth(), data)?)
}

/// The nodule marker in display coordinates; radius is half the recorded size.
fn circle_for(record: Option<&SampleRecord>, raw: &RawImage, display: &RawImage) -> Option<Circle> {
    let r = record?;
    let (cx, cy) = r.nodule_center?;
    let sx = display.width() as f64 / raw.width() as f64;
    let sy = display.height() as f64 / raw.height() as f64;
    let size = r.nodule_size.unwrap_or(0.1 * raw.width() as f64);
    Some(Circle {
        cx: cx * sx,
        cy: cy * sy,
        radius: 0.5 * size * sx,
    })
}

fn render_one(item: &Item, ck: &Checkpoint, stage: &str, alpha: f64, display_size: Option<usize>, ctx: &RunContext) -> Result<CamRecord> {
    let (id, raw, record) = item.load()?;
    let features = ck.model.extract_features(&prepare(&raw, &ck.meta.prep)?)?;
    let map = compute_cam(&features, &ck.model.head_weights().weights)?;
    let display = match display_size {
        Some(s) => resize_raw(&raw, s)?,
        None => raw.clone(),
    };
    let overlay = render_overlay(&display, &map, alpha, circle_for(record, &raw, &display))?;
    save_overlay(&ctx.out, &id, stage, &overlay)?;
    Ok(CamRecord::new(&id, stage, &map, (display.width(), display.height()))?)
}

pub fn run(args: &CamArgs, ctx: &RunContext) -> Result<RunReport> {
    let ck = Checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let stage = ck.meta.stage.map_or_else(|| "model".to_string(), |s| s.to_string());
    let alpha = args.alpha.unwrap_or(ctx.cfg.cam.alpha);
    let mut report = RunReport::default();
    report.provenance.insert("checkpoint".into(), ck.hash().to_string());

    let selected = if args.image.is_empty() { Some(select(&args.selection, &ck, ctx)?) } else { None };
    let mut items: Vec<Item> = match &selected {
        None => args.image.iter().cloned().map(Item::File).collect(),
        Some(sel) => {
            report
                .datasets
                .insert(sel.collection.dataset.clone(), sel.collection.digest()?);
            sel.indices
                .iter()
                .filter(|&&i| !args.positives_only || sel.collection.labels[i] == 1)
                .map(|&i| Item::Record(&sel.collection, i))
                .collect()
        }
    };
    if let Some(n) = args.limit {
        items.truncate(n);
    }
    if items.is_empty() {
        log::warn!("no images selected");
    }

    let results: Vec<Result<CamRecord>> = items
        .par_iter()
        .map(|it| render_one(it, &ck, &stage, alpha, args.display_size, ctx))
        .collect();
    let mut records = Vec::new();
    let mut failed = Vec::new();
    for (it, r) in items.iter().zip(results) {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failed.push(Failure {
                item: it.name(),
                error: format!("{e:#}"),
            }),
        }
    }
    write_sidecar(&ctx.out.join(SIDECAR), &records)?;
    println!("{} overlays written to {}", records.len(), ctx.out.display());
    report.failures = failures::report(&ctx.out, &failed)?;
    Ok(report)
}
