//! Acceptance suite: one PASS/FAIL line per criterion, then a single assert.
//!
//! Run with `cargo test -p cxrcascade-cli --test acceptance -- --nocapture`
//! to see the lines and the transfer table.

mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use cxrcascade::cam::{cam_logit_identity, compute_cam};
use cxrcascade::data::split::{make_folds, split_grouped, GroupingKey, SplitSizes};
use cxrcascade::data::{generate_synthetic, Malignancy, Manifest, SampleRecord, Source, TaskLabeling, NODULE};
use cxrcascade::desk::{desk_base, desk_data, DeskConfig};
use cxrcascade::eval::{confusion, evaluate, metrics, sweep_grid, sweep_threshold};
use cxrcascade::imgprep::{equalize_histogram, median_filter, prepare, Image, RawImage};
use cxrcascade::model::{build_model, BackboneKind, BackboneSpec, ClassifierModel, DeskTinyConfig, FeatureMaps, Init};
use cxrcascade::train::{
    loss_gradient_check, predict, run_cascade, train_stage, weighted_bce, CascadeConfig, Checkpoint, ClassWeights,
    PlateauSchedule, Stage, StageSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn random_raw(rng: &mut ChaCha8Rng) -> RawImage {
    let w = rng.random_range(1..=16);
    let h = rng.random_range(1..=16);
    let depth = if rng.random_bool(0.5) { 8 } else { 12 };
    let max = (1u32 << depth) - 1;
    // a narrow random band keeps many ties in the histogram
    let lo = rng.random_range(0..=max);
    let hi = rng.random_range(lo..=max);
    let data = (0..w * h).map(|_| rng.random_range(lo..=hi) as u16).collect();
    RawImage::gray(w, h, depth, data).unwrap()
}

fn mirror(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

fn brute_median(img: &RawImage, window: usize) -> Vec<u16> {
    let (w, h) = (img.width(), img.height());
    let r = (window / 2) as isize;
    let mut out = Vec::new();
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut v = Vec::new();
            for dy in -r..=r {
                for dx in -r..=r {
                    v.push(img.get(mirror(x + dx, w), mirror(y + dy, h)));
                }
            }
            v.sort_unstable();
            out.push(v[v.len() / 2]);
        }
    }
    out
}

fn brute_equalize(img: &RawImage) -> Vec<u16> {
    let data = img.data();
    let n = data.len() as f64;
    let top = f64::from(img.max_value());
    let lowest = *data.iter().min().unwrap();
    let cdf = |v: u16| data.iter().filter(|&&u| u <= v).count() as f64;
    let cdf_min = cdf(lowest);
    if cdf_min == n {
        return data.to_vec();
    }
    data.iter()
        .map(|&v| ((cdf(v) - cdf_min) / (n - cdf_min) * top).round() as u16)
        .collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..100 {
        let img = random_raw(&mut rng);
        check(median_filter(&img, 3).unwrap().data() == brute_median(&img, 3), format!("median differs on image {i}"))?;
        check(
            equalize_histogram(&img).unwrap().data() == brute_equalize(&img),
            format!("equalization differs on image {i}"),
        )?;
    }
    let t = start.elapsed();
    check(t < Duration::from_secs(10), format!("took {t:?}"))?;
    Ok(format!("100 images match brute force exactly in {t:.2?}"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p: f64 = rng.random_range(1e-6..1.0 - 1e-6);
        let y: u8 = rng.random_range(0..2);
        let wp: f64 = rng.random_range(0.0..1.0);
        let w = ClassWeights { w_plus: wp, w_minus: 1.0 - wp };
        let yf = f64::from(y);
        let direct = -w.w_plus * yf * p.ln() - w.w_minus * (1.0 - yf) * (1.0 - p).ln();
        worst = worst.max((weighted_bce(p, y, w).unwrap() - direct).abs());
        let bce = -(yf * p.ln() + (1.0 - yf) * (1.0 - p).ln());
        let half = weighted_bce(p, y, ClassWeights::BALANCED).unwrap();
        check((half - 0.5 * bce).abs() <= 1e-12, format!("balanced case {half} vs {}", 0.5 * bce))?;
    }
    check(worst <= 1e-10, format!("max deviation {worst:e}"))?;
    Ok(format!("1000 triples, max deviation {worst:.1e}; balanced = 0.5 x BCE"))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    for batch_norm in [true, false] {
        let spec = BackboneSpec {
            kind: BackboneKind::DeskTiny(DeskTinyConfig { widths: vec![4, 6], feature_channels: 6, batch_norm }),
            input_size: 16,
            pretrained_weights: None,
        };
        let mut model = build_model(&spec, Init::Random(42)).map_err(|e| e.to_string())?;
        model.head_weight.value.iter_mut().for_each(|w| *w *= 50.0);
        let set = generate_synthetic(3, 3, 16, 42);
        let prep = cxrcascade::imgprep::PrepConfig::default().with_target_size(16);
        let images: Vec<_> = set.images.iter().map(|r| prepare(r, &prep).unwrap()).collect();
        let x = ClassifierModel::batch(&images).unwrap();
        let w = ClassWeights { w_plus: 0.4, w_minus: 0.6 };
        let r = loss_gradient_check(&model, &x, &[1, 1, 1, 0, 0, 0], w, 1e-5).map_err(|e| e.to_string())?;
        checked += r.checked;
        if r.max_rel_error > worst.0 {
            worst = (r.max_rel_error, r.worst);
        }
    }
    let t = start.elapsed();
    check(worst.0 < 1e-3, format!("relative error {:.2e} at {}", worst.0, worst.1))?;
    check(t < Duration::from_secs(60), format!("took {t:?}"))?;
    Ok(format!("{checked} parameters, max relative error {:.2e}, {t:.2?}", worst.0))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let side = [16, 32][i as usize % 2];
        let spec = BackboneSpec::desk_tiny(side, vec![3 + (i as usize % 3), 6], 4 + (i as usize % 4));
        let mut model = build_model(&spec, Init::Random(100 + i)).unwrap();
        model.head_weight.value.iter_mut().for_each(|w| *w = rng.random_range(-2.0..2.0));
        model.head_bias.value[0] = rng.random_range(-1.0..1.0);
        let data = (0..3 * side * side).map(|_| rng.random_range(-2.5..2.5)).collect();
        let img = Image::new(side, side, 3, data).unwrap();
        let c = cam_logit_identity(&model, &img).unwrap();
        worst = worst.max(c.error());
    }
    check(worst <= 1e-5, format!("identity error {worst:e}"))?;

    let mut lin = 0.0f64;
    for _ in 0..200 {
        let (k, h, w) = (rng.random_range(1..6), rng.random_range(1..5), rng.random_range(1..5));
        let f = FeatureMaps {
            channels: k,
            height: h,
            width: w,
            maps: (0..k * h * w).map(|_| rng.random_range(-10.0..10.0)).collect(),
            source_input_size: 0,
        };
        let w1: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let w2: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let a: f64 = rng.random_range(-5.0..5.0);
        let c1 = compute_cam(&f, &w1).unwrap().raw;
        let c2 = compute_cam(&f, &w2).unwrap().raw;
        let scaled = compute_cam(&f, &w1.iter().map(|x| a * x).collect::<Vec<_>>()).unwrap().raw;
        let sum = compute_cam(&f, &w1.iter().zip(&w2).map(|(x, y)| x + y).collect::<Vec<_>>()).unwrap().raw;
        for j in 0..c1.len() {
            lin = lin.max((scaled[j] - a * c1[j]).abs()).max((sum[j] - c1[j] - c2[j]).abs());
        }
    }
    check(lin <= 1e-10, format!("linearity error {lin:e}"))?;
    Ok(format!("identity max error {worst:.1e} over 50 pairs; linearity max error {lin:.1e}"))
}

fn record(i: usize, patient: &str, nodule: bool, malignancy: Malignancy) -> SampleRecord {
    SampleRecord {
        image_ref: format!("img{i:04}.png"),
        patient_id: patient.into(),
        findings: if nodule { [NODULE.to_string()].into() } else { Default::default() },
        malignancy,
        nodule_center: None,
        nodule_size: None,
    }
}

fn criterion_5() -> Outcome {
    // several images per patient, as in the large collection
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let recs: Vec<_> = (0..600)
        .map(|i| record(i, &format!("p{}", rng.random_range(0..150)), rng.random_bool(0.3), Malignancy::Unknown))
        .collect();
    let m = Manifest::new(Source::Chestxray14, recs).unwrap();
    let nodule = TaskLabeling::nodule();
    for seed in 0..5 {
        let s = split_grouped(&m, &nodule, SplitSizes::EIGHT_ONE_ONE, GroupingKey::Patient, seed).map_err(|e| e.to_string())?;
        let pats = |idx: &[usize]| idx.iter().map(|&i| m.records()[i].patient_id.clone()).collect::<HashSet<_>>();
        let (tr, va, te) = (pats(&s.train), pats(&s.validation), pats(&s.test));
        check(
            tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te),
            format!("patient overlap with seed {seed}"),
        )?;
        check(s.train.len() + s.validation.len() + s.test.len() == 600, "split does not cover the manifest")?;
        check(s == split_grouped(&m, &nodule, SplitSizes::EIGHT_ONE_ONE, GroupingKey::Patient, seed).unwrap(), "split not deterministic")?;
    }

    let recs: Vec<_> = (0..247)
        .map(|i| match i {
            0..100 => record(i, &format!("j{i}"), true, Malignancy::Malignant),
            100..154 => record(i, &format!("j{i}"), true, Malignancy::Benign),
            _ => record(i, &format!("j{i}"), false, Malignancy::None),
        })
        .collect();
    let jsrt = Manifest::new(Source::Jsrt, recs).unwrap();
    let mal = TaskLabeling::malignancy();
    let plan = make_folds(&jsrt, &mal, 10, 8.0, 1.0, 7).map_err(|e| e.to_string())?;
    let mut seen = vec![0; 247];
    for f in &plan.folds {
        check(f.test.len() == 24 || f.test.len() == 25, format!("test size {}", f.test.len()))?;
        f.test.iter().for_each(|&i| seen[i] += 1);
        let all: HashSet<usize> = f.train.iter().chain(&f.validation).chain(&f.test).copied().collect();
        check(all.len() == 247 && f.train.len() + f.validation.len() + f.test.len() == 247, "fold is not a partition")?;
    }
    check(seen.iter().all(|&c| c == 1), "test sets do not partition the manifest")?;
    check(plan == make_folds(&jsrt, &mal, 10, 8.0, 1.0, 7).unwrap(), "folds not deterministic")?;
    Ok("no patient overlap over 5 seeds; 10 folds of 247 with test sizes 24/25; deterministic".into())
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..200 {
        let n = rng.random_range(2..60);
        let probs: Vec<f64> = (0..n).map(|_| (rng.random_range(0..=100) as f64) / 100.0).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let t = rng.random_range(0..=100) as f64 / 100.0;
        let (mut tp, mut tn, mut fp, mut fn_) = (0usize, 0usize, 0usize, 0usize);
        for (&p, &y) in probs.iter().zip(&labels) {
            match (p >= t, y == 1) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
            }
        }
        let c = confusion(&probs, &labels, t).unwrap();
        check((c.tp, c.tn, c.fp, c.fn_) == (tp, tn, fp, fn_), format!("confusion differs in trial {trial}"))?;
        let m = metrics(c, t).unwrap();
        check(m.accuracy == (tp + tn) as f64 / n as f64, "accuracy differs")?;
        check(m.sensitivity == Some(tp as f64 / (tp + fn_) as f64), "sensitivity differs")?;
        check(m.specificity == Some(tn as f64 / (tn + fp) as f64), "specificity differs")?;

        let sweep = sweep_threshold(&probs, &labels).unwrap();
        let mut best = (f64::NAN, f64::NEG_INFINITY);
        for (row, g) in sweep.table.iter().zip(sweep_grid()) {
            let r = evaluate(&probs, &labels, g).unwrap();
            let sum = r.specificity.unwrap() + r.sensitivity.unwrap();
            check(row.threshold == g && row.sum == sum, "sweep row differs from direct evaluation")?;
            if sum > best.1 {
                best = (g, sum);
            }
        }
        check(sweep.best_threshold == best.0, format!("sweep picked {} not {}", sweep.best_threshold, best.0))?;
    }
    let probs = [0.1, 0.3, 0.5, 0.54, 0.55, 0.6, 0.7, 0.9];
    let labels = [0, 0, 0, 0, 1, 1, 1, 1];
    let s = sweep_threshold(&probs, &labels).unwrap();
    check(s.best_threshold == 0.55, format!("constructed optimum recovered as {}", s.best_threshold))?;
    Ok("200 random sets match per-sample loops and exhaustive sweeps; optimum 0.55 recovered".into())
}

fn criterion_7() -> Outcome {
    struct Script {
        lr: f64,
        factor: f64,
        patience: usize,
        min_lr: f64,
        losses: &'static [f64],
        expected: &'static [f64],
    }
    let scripts = [
        Script { lr: 1e-3, factor: 10.0, patience: 1, min_lr: 1e-6, losses: &[1.0; 5], expected: &[1e-3, 1e-3, 1e-4, 1e-4, 1e-5] },
        Script { lr: 1e-3, factor: 10.0, patience: 1, min_lr: 1e-6, losses: &[1.0, 0.9, 0.8, 0.7], expected: &[1e-3; 4] },
        Script { lr: 1e-3, factor: 10.0, patience: 0, min_lr: 1e-5, losses: &[1.0; 5], expected: &[1e-3, 1e-4, 1e-5, 1e-5, 1e-5] },
        Script {
            lr: 1e-3,
            factor: 10.0,
            patience: 1,
            min_lr: 1e-6,
            losses: &[1.0, 0.99995, 0.99996, 0.5, 0.5, 0.5],
            expected: &[1e-3, 1e-3, 1e-4, 1e-4, 1e-4, 1e-5],
        },
        Script {
            lr: 0.1,
            factor: 2.0,
            patience: 2,
            min_lr: 0.01,
            losses: &[3.0, 2.0, 2.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0],
            expected: &[0.1, 0.1, 0.1, 0.1, 0.05, 0.05, 0.05, 0.05, 0.025],
        },
    ];
    for (i, s) in scripts.iter().enumerate() {
        let mut p = PlateauSchedule::new(s.lr, s.factor, s.patience, 1e-4, s.min_lr);
        let trace: Vec<f64> = s.losses.iter().map(|&l| p.step(l)).collect();
        check(trace == s.expected, format!("script {i}: {trace:?} != {:?}", s.expected))?;
    }
    Ok("5 scripted traces match exactly".into())
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = tmp.path().join("cascade");
    let start = Instant::now();
    let o = common::run(&["--out", common::s(&out), "train", "--desk", "--stage", "cascade"]);
    let t = start.elapsed();
    check(o.status.success(), format!("exit {:?}: {}", o.status.code(), common::stderr(&o)))?;
    check(t < Duration::from_secs(600), format!("took {t:?}"))?;

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("run_manifest.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let base = manifest["provenance"]["base"].as_str().ok_or("no base hash")?.to_string();
    let load = |n: &str| Checkpoint::load(&out.join(n)).map_err(|e| format!("{n}: {e}"));
    let a = load("model_A.safetensors")?;
    check(a.meta.stage == Some(Stage::A) && a.meta.parent_hash.as_deref() == Some(base.as_str()), "A provenance")?;
    let mut stage2_train = Vec::new();
    for f in 0..2 {
        let b = load(&format!("model_B_fold{f}.safetensors"))?;
        let c = load(&format!("model_C_fold{f}.safetensors"))?;
        check(b.meta.stage == Some(Stage::B) && b.meta.fold == Some(f), "B stage or fold")?;
        check(b.meta.parent_hash.as_deref() == Some(base.as_str()), "B does not start from the base model")?;
        check(c.meta.stage == Some(Stage::C) && c.meta.fold == Some(f), "C stage or fold")?;
        check(c.meta.parent_hash.as_deref() == Some(a.hash()), "C does not record the A hash")?;
    }
    let ckpts = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "safetensors"))
        .count();
    check(ckpts == 5, format!("{ckpts} checkpoints"))?;

    let folds: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("stage2_folds.json")).unwrap()).unwrap();
    for f in folds["plan"]["folds"].as_array().ok_or("fold plan")? {
        stage2_train.push(f["train"].as_array().unwrap().len());
    }
    let stage1 = std::fs::read_to_string(out.join("stage1_manifest.csv")).unwrap().lines().filter(|l| !l.starts_with('#')).count() - 1;
    check(stage1 == 200, format!("stage-1 images {stage1}"))?;

    let mut rdr = csv::Reader::from_path(out.join("epochs_A.csv")).map_err(|e| e.to_string())?;
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (steps_col, acc_col) = (col("steps"), col("train_accuracy"));
    let mut reached = None;
    for r in rdr.records() {
        let r = r.unwrap();
        let steps: usize = r[steps_col].parse().unwrap();
        let acc: f64 = r[acc_col].parse().unwrap();
        if steps <= 200 && acc >= 0.9 {
            reached = Some((steps, acc));
            break;
        }
    }
    let (steps, acc) = reached.ok_or("stage-A training accuracy never reached 0.9 within 200 steps")?;
    Ok(format!(
        "{t:.1?}; 1 A + 2 B + 2 C with correct provenance; stage-2 train sizes {stage2_train:?}; \
         train accuracy {acc:.3} after {steps} steps"
    ))
}

fn accuracy(p: &[f64], labels: &[u8], t: f64) -> f64 {
    p.iter().zip(labels).filter(|(&p, &y)| (p >= t) == (y == 1)).count() as f64 / p.len() as f64
}

fn criterion_9() -> Outcome {
    let mut rows = Vec::new();
    for seed in 0..5 {
        let cfg = DeskConfig::default().with_seed(seed);
        let data = desk_data(&cfg).map_err(|e| e.to_string())?;
        let base = desk_base(&cfg).map_err(|e| e.to_string())?;
        let cc = CascadeConfig { stage_a: cfg.stage_a.clone(), stage_bc: cfg.stage_bc.clone() };
        let out = run_cascade(&base, &data.plan, &cc, None).map_err(|e| e.to_string())?;
        let (mut b, mut c) = (Vec::new(), Vec::new());
        for (fo, fd) in out.folds.iter().zip(&data.plan.folds) {
            let pb = predict(&fo.b.checkpoint.model, &fd.test, &data.prep, 32).unwrap();
            let pc = predict(&fo.c.checkpoint.model, &fd.test, &data.prep, 32).unwrap();
            b.push(accuracy(&pb, fd.test.labels(), 0.5));
            c.push(accuracy(&pc, fd.test.labels(), 0.5));
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        rows.push((seed, mean(&b), mean(&c)));
    }
    println!("  seed | B test accuracy | C test accuracy");
    for (s, b, c) in &rows {
        println!("  {s:>4} | {b:>15.3} | {c:>15.3}");
    }
    let mb = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
    let mc = rows.iter().map(|r| r.2).sum::<f64>() / rows.len() as f64;
    println!("  mean | {mb:>15.3} | {mc:>15.3}");
    check(mc >= mb - 0.05, format!("mean C {mc:.3} < mean B {mb:.3} - 0.05"))?;
    Ok(format!("mean C {mc:.3} vs mean B {mb:.3} over 5 seeds"))
}

fn criterion_10() -> Outcome {
    let cfg = DeskConfig::default();
    let data = desk_data(&cfg).map_err(|e| e.to_string())?;
    let base = desk_base(&cfg).map_err(|e| e.to_string())?;
    let a = train_stage(&base, &StageSpec::a(), &data.plan.stage_a_train, &data.plan.stage_a_validation, &cfg.stage_a)
        .map_err(|e| e.to_string())?;
    let model = &a.checkpoint.model;
    // ten fresh positives, never seen in training
    let test = generate_synthetic(10, 0, cfg.image_size, 1000);
    let mut hits = 0;
    let mut dists = Vec::new();
    for (r, raw) in test.manifest.records().iter().zip(&test.images) {
        let (cx, cy) = r.nodule_center.ok_or("positive without center")?;
        let f = model.extract_features(&prepare(raw, &data.prep).unwrap()).unwrap();
        let cam = compute_cam(&f, &model.head_weights().weights).unwrap();
        let (x, y) = cam.argmax_upsampled(raw.height(), raw.width()).unwrap();
        let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
        dists.push(format!("{d:.1}"));
        if d <= 0.25 * raw.width() as f64 {
            hits += 1;
        }
    }
    check(hits >= 7, format!("{hits}/10 within 25% of width; distances {dists:?}"))?;
    Ok(format!("{hits}/10 argmax within 25% of width (distances in px: {})", dists.join(", ")))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("preprocessing oracles", criterion_1),
        ("loss correctness", criterion_2),
        ("gradient check", criterion_3),
        ("head/CAM identity and linearity", criterion_4),
        ("split and fold properties", criterion_5),
        ("metrics and sweep oracles", criterion_6),
        ("plateau schedule traces", criterion_7),
        ("end-to-end desk cascade", criterion_8),
        ("directional transfer benefit", criterion_9),
        ("CAM localization", criterion_10),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("PASS criterion {n:>2} ({name}): {detail}"),
            Err(why) => {
                println!("FAIL criterion {n:>2} ({name}): {why}");
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
