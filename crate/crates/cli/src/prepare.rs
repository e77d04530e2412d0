//! `prepare`: the preprocessing chain over a directory, a manifest or
//! synthetic desk images.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cxrcascade::data::{generate_synthetic_with, Manifest, SampleRecord, SyntheticKind, SyntheticSpec};
use cxrcascade::imgprep::io::{load_image, save_image_png, save_raw_png};
use cxrcascade::imgprep::{prepare_gray, prepare_stages, Image, PrepConfig, RawImage};
use rayon::prelude::*;

use crate::args::PrepareArgs;
use crate::failures::{self, Failure};
use crate::run::sha256_hex;
use crate::{Context as RunContext, RunReport};

pub const PREPARED_DIR: &str = "prepared";
pub const DEBUG_DIR: &str = "debug";
pub const PREPARED_MANIFEST: &str = "prepared_manifest.csv";

/// File names of the debug images, in chain order.
pub const DEBUG_STAGES: [&str; 4] = ["1_equalized", "2_median", "3_resized", "4_normalized"];

enum Input {
    Path(PathBuf),
    Memory(RawImage),
}

struct Item {
    id: String,
    input: Input,
    record: Option<SampleRecord>,
}

fn is_image(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png") | Some("img")
    )
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// `[0, 1]` gray quantized to 8 bits.
fn to_raw8(img: &Image) -> Result<RawImage> {
    let data = img.plane(0).iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u16).collect();
    Ok(RawImage::gray(img.width(), img.height(), 8, data)?)
}

fn process(item: &Item, prep: &PrepConfig, out: &Path, debug: bool) -> Result<(usize, usize)> {
    let raw = match &item.input {
        Input::Path(p) => load_image(p)?,
        Input::Memory(r) => r.clone(),
    };
    let gray = if debug {
        let s = prepare_stages(&raw, prep)?;
        let d = out.join(DEBUG_DIR);
        let name = |i: usize| d.join(format!("{}_{}.png", item.id, DEBUG_STAGES[i]));
        save_raw_png(&s.equalized, &name(0))?;
        save_raw_png(&s.filtered, &name(1))?;
        save_raw_png(&to_raw8(&s.resized)?, &name(2))?;
        save_image_png(&s.normalized, &name(3))?;
        s.resized
    } else {
        prepare_gray(&raw, prep)?
    };
    save_raw_png(&to_raw8(&gray)?, &out.join(PREPARED_DIR).join(format!("{}.png", item.id)))?;
    Ok((raw.width(), raw.height()))
}

/// The record as it refers to its prepared image.
fn prepared_record(r: &SampleRecord, id: &str, source: (usize, usize), target: usize) -> SampleRecord {
    let sx = target as f64 / source.0 as f64;
    let sy = target as f64 / source.1 as f64;
    SampleRecord {
        image_ref: format!("{PREPARED_DIR}/{id}.png"),
        nodule_center: r.nodule_center.map(|(x, y)| (x * sx, y * sy)),
        nodule_size: r.nodule_size.map(|s| s * sx),
        ..r.clone()
    }
}

fn gather(args: &PrepareArgs, ctx: &RunContext, report: &mut RunReport) -> Result<(Vec<Item>, Option<Manifest>)> {
    if ctx.desk {
        let d = &ctx.cfg.desk;
        let set = generate_synthetic_with(SyntheticSpec {
            kind: SyntheticKind::Nodule,
            n_pos: d.stage1_positives,
            n_neg: d.stage1_negatives,
            image_size: d.image_size,
            seed: d.seed,
        });
        let raw_dir = ctx.out.join("raw");
        fs::create_dir_all(&raw_dir)?;
        for (r, img) in set.manifest.records().iter().zip(&set.images) {
            save_raw_png(img, &raw_dir.join(&r.image_ref))?;
        }
        set.manifest.write_csv(&ctx.out.join("raw_manifest.csv"))?;
        report
            .datasets
            .insert("synthetic".into(), sha256_hex(set.manifest.to_csv_string()?.as_bytes()));
        let items = set
            .manifest
            .records()
            .iter()
            .zip(set.images)
            .map(|(r, img)| Item {
                id: r.image_id(),
                input: Input::Memory(img),
                record: Some(r.clone()),
            })
            .collect();
        return Ok((items, Some(set.manifest)));
    }
    if let Some(path) = &args.manifest {
        let manifest = Manifest::read_csv(path)?;
        let root = match &args.images_root {
            Some(r) => r.clone(),
            None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        report
            .datasets
            .insert(stem(path), sha256_hex(manifest.to_csv_string()?.as_bytes()));
        let items = manifest
            .records()
            .iter()
            .map(|r| Item {
                id: r.image_id(),
                input: Input::Path(r.resolve(&root)),
                record: Some(r.clone()),
            })
            .collect();
        return Ok((items, Some(manifest)));
    }
    let Some(dir) = &args.input else {
        bail!("prepare needs --input <dir>, --manifest <csv> or --desk");
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading input directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    paths.sort();
    if paths.is_empty() {
        log::warn!("no PNG or .IMG files in {}", dir.display());
    }
    let listing: String = paths.iter().map(|p| format!("{}\n", p.display())).collect();
    report.datasets.insert("input".into(), sha256_hex(listing.as_bytes()));
    let items = paths
        .into_iter()
        .map(|p| Item {
            id: stem(&p),
            input: Input::Path(p),
            record: None,
        })
        .collect();
    Ok((items, None))
}

pub fn run(args: &PrepareArgs, ctx: &RunContext) -> Result<RunReport> {
    let prep = if ctx.desk { ctx.cfg.desk.prep() } else { ctx.cfg.prep.clone() };
    let mut report = RunReport::default();
    let (items, manifest) = gather(args, ctx, &mut report)?;
    fs::create_dir_all(ctx.out.join(PREPARED_DIR))?;
    if args.debug_stages {
        fs::create_dir_all(ctx.out.join(DEBUG_DIR))?;
    }

    let results: Vec<Result<(usize, usize)>> = items
        .par_iter()
        .map(|it| process(it, &prep, &ctx.out, args.debug_stages))
        .collect();
    let mut failed = Vec::new();
    let mut records = Vec::new();
    for (it, r) in items.iter().zip(results) {
        match r {
            Ok(size) => {
                if let Some(rec) = &it.record {
                    records.push(prepared_record(rec, &it.id, size, prep.target_size));
                }
            }
            Err(e) => failed.push(Failure {
                item: match &it.input {
                    Input::Path(p) => p.display().to_string(),
                    Input::Memory(_) => it.id.clone(),
                },
                error: format!("{e:#}"),
            }),
        }
    }
    if let Some(m) = manifest {
        Manifest::new(m.source(), records)?.write_csv(&ctx.out.join(PREPARED_MANIFEST))?;
    }
    println!(
        "{} of {} images prepared into {}",
        items.len() - failed.len(),
        items.len(),
        ctx.out.join(PREPARED_DIR).display()
    );
    report.failures = failures::report(&ctx.out, &failed)?;
    Ok(report)
}
