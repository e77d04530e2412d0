use cxrcascade::desk::{desk_base, desk_data, DeskConfig, DeskData};
use cxrcascade::model::{build_model, BackboneKind, BackboneSpec, ClassifierModel, DeskTinyConfig, Init};
use cxrcascade::train::{
    loss_gradient_check, run_cascade, train_stage, train_stage_c, CascadeConfig, Checkpoint, ClassWeights,
    Stage, StageSpec, TrainConfig,
};
use cxrcascade::imgprep::{prepare, PrepConfig};

fn small() -> DeskConfig {
    let mut cfg = DeskConfig {
        image_size: 32,
        backbone: BackboneSpec {
            kind: BackboneKind::DeskTiny(DeskTinyConfig {
                widths: vec![4, 8],
                feature_channels: 8,
                batch_norm: true,
            }),
            input_size: 32,
            pretrained_weights: None,
        },
        stage1_positives: 20,
        stage1_negatives: 20,
        stage2_positives: 10,
        stage2_negatives: 10,
        folds: 2,
        ..DeskConfig::default()
    };
    cfg.stage_a = TrainConfig { max_epochs: 3, max_steps: None, batch_size: 8, ..TrainConfig::default() };
    cfg.stage_bc = TrainConfig { max_epochs: 3, batch_size: 8, ..TrainConfig::default() };
    cfg.with_seed(11)
}

fn setup() -> (DeskConfig, DeskData, Checkpoint) {
    let cfg = small();
    let data = desk_data(&cfg).unwrap();
    let base = desk_base(&cfg).unwrap();
    (cfg, data, base)
}

fn batch_of(data: &DeskData, n: usize, prep: &PrepConfig) -> (cxrcascade::model::Tensor, Vec<u8>) {
    let images: Vec<_> = data.stage1.images[..n].iter().map(|r| prepare(r, prep).unwrap()).collect();
    let labels = data.stage1.manifest.labels(&cxrcascade::data::TaskLabeling::nodule()).unwrap()[..n].to_vec();
    (ClassifierModel::batch(&images).unwrap(), labels)
}

#[test]
fn gradient_check_desk_tiny() {
    for batch_norm in [false, true] {
        let spec = BackboneSpec {
            kind: BackboneKind::DeskTiny(DeskTinyConfig { widths: vec![3, 4], feature_channels: 4, batch_norm }),
            input_size: 16,
            pretrained_weights: None,
        };
        let mut model = build_model(&spec, Init::Random(5)).unwrap();
        model.head_weight.value.iter_mut().for_each(|w| *w *= 50.0);
        let cfg = DeskConfig { image_size: 16, ..small() };
        let data = desk_data(&DeskConfig { backbone: spec.clone(), ..cfg }).unwrap();
        let prep = PrepConfig::default().with_target_size(16);
        let n = data.stage1.images.len();
        let images: Vec<_> = [0, 1, n - 2, n - 1].iter().map(|&i| prepare(&data.stage1.images[i], &prep).unwrap()).collect();
        let x = ClassifierModel::batch(&images).unwrap();
        let w = ClassWeights { w_plus: 0.3, w_minus: 0.7 };
        let report = loss_gradient_check(&model, &x, &[1, 1, 0, 0], w, 1e-5).unwrap();
        assert!(report.checked > 300);
        assert!(
            report.max_rel_error < 1e-3,
            "batch_norm={batch_norm}: worst {} at {}",
            report.max_rel_error,
            report.worst
        );
    }
}

#[test]
fn zero_epochs_returns_initial_model() {
    let (cfg, data, base) = setup();
    let tc = TrainConfig { max_epochs: 0, ..cfg.stage_a.clone() };
    let out = train_stage(&base, &StageSpec::a(), &data.plan.stage_a_train, &data.plan.stage_a_validation, &tc).unwrap();
    assert!(out.epochs.is_empty());
    assert_eq!(out.checkpoint.hash(), base.hash());
    assert_eq!(out.checkpoint.meta.validation_loss, Some(out.initial_validation_loss));
    assert_eq!(out.checkpoint.meta.stage, Some(Stage::A));
}

#[test]
fn best_checkpoint_has_least_validation_loss() {
    let (cfg, data, base) = setup();
    let out = train_stage(&base, &StageSpec::a(), &data.plan.stage_a_train, &data.plan.stage_a_validation, &cfg.stage_a).unwrap();
    let best = out.checkpoint.meta.validation_loss.unwrap();
    assert!(!out.epochs.is_empty());
    for e in &out.epochs {
        assert!(best <= e.validation_loss);
    }
    let chosen = out.checkpoint.meta.epoch.unwrap();
    assert_eq!(out.epochs[chosen - 1].validation_loss, best);
    assert_eq!(out.checkpoint.meta.parent_hash.as_deref(), Some(base.hash()));
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let (cfg, data, base) = setup();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                train_stage(&base, &StageSpec::a(), &data.plan.stage_a_train, &data.plan.stage_a_validation, &cfg.stage_a)
                    .unwrap()
            })
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.checkpoint.hash(), b.checkpoint.hash());
    assert_eq!(a.epochs, b.epochs);
}

#[test]
fn stage_c_requires_stage_a() {
    let (cfg, data, base) = setup();
    let err = train_stage_c(None, 0, &data.plan.folds[0], &cfg.stage_bc).unwrap_err();
    assert!(err.to_string().contains("stage A"), "{err}");
    let err = train_stage(&base, &StageSpec::c(0), &data.plan.folds[0].train, &data.plan.folds[0].validation, &cfg.stage_bc)
        .unwrap_err();
    assert!(err.to_string().contains("stage-A"), "{err}");
}

#[test]
fn cascade_provenance_and_c_starts_from_a() {
    let (cfg, data, base) = setup();
    let dir = tempfile::tempdir().unwrap();
    let cc = CascadeConfig { stage_a: cfg.stage_a.clone(), stage_bc: cfg.stage_bc.clone() };
    let out = run_cascade(&base, &data.plan, &cc, Some(dir.path())).unwrap();
    let a_hash = out.a.checkpoint.hash().to_string();
    assert_eq!(out.folds.len(), 2);
    for (f, fo) in out.folds.iter().enumerate() {
        assert_eq!(fo.b.checkpoint.meta.parent_hash.as_deref(), Some(base.hash()));
        assert_eq!(fo.c.checkpoint.meta.parent_hash.as_deref(), Some(a_hash.as_str()));
        assert_eq!(fo.b.checkpoint.meta.fold, Some(f));
        assert_eq!(fo.c.checkpoint.meta.stage, Some(Stage::C));
    }

    // C's starting point is A's parameters: with no epochs it returns them unchanged
    let zero = TrainConfig { max_epochs: 0, ..cfg.stage_bc.clone() };
    let c0 = train_stage_c(Some(&out.a.checkpoint), 0, &data.plan.folds[0], &zero).unwrap();
    assert_eq!(c0.checkpoint.hash(), a_hash);

    let mut names: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "epochs_A.csv",
            "epochs_B_fold0.csv",
            "epochs_B_fold1.csv",
            "epochs_C_fold0.csv",
            "epochs_C_fold1.csv",
            "model_A.safetensors",
            "model_B_fold0.safetensors",
            "model_B_fold1.safetensors",
            "model_C_fold0.safetensors",
            "model_C_fold1.safetensors",
        ]
    );
    let loaded = Checkpoint::load(&dir.path().join("model_C_fold1.safetensors")).unwrap();
    assert_eq!(loaded.meta, out.folds[1].c.checkpoint.meta);
}

#[test]
fn batch_helper_shapes() {
    let (cfg, data, _) = setup();
    let (x, y) = batch_of(&data, 3, &cfg.prep());
    assert_eq!(x.shape(), [3, 3, 32, 32]);
    assert_eq!(y.len(), 3);
}
