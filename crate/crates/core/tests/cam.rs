use cxrcascade::cam::{cam_logit_identity, compute_cam, render_overlay, ActivationMap, Circle};
use cxrcascade::imgprep::{Image, RawImage};
use cxrcascade::model::{build_model, BackboneSpec, ClassifierModel, FeatureMaps, Init};
use cxrcascade::train::{batch_loss, Adam, ClassWeights};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng, side: usize) -> Image {
    let data = (0..3 * side * side).map(|_| rng.random_range(-2.0..2.0)).collect();
    Image::new(side, side, 3, data).unwrap()
}

#[test]
fn identity_on_random_models_and_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let widths = if i % 2 == 0 { vec![4, 8] } else { vec![3, 5, 6] };
        let k = 4 + (i as usize % 5);
        let spec = BackboneSpec::desk_tiny(32, widths, k);
        let mut model = build_model(&spec, Init::Random(i)).unwrap();
        for w in model.head_weight.value.iter_mut() {
            *w = rng.random_range(-3.0..3.0);
        }
        model.head_bias.value[0] = rng.random_range(-1.0..1.0);
        let check = cam_logit_identity(&model, &random_image(&mut rng, 32)).unwrap();
        check.ensure(1e-5).unwrap();
        worst = worst.max(check.error());
    }
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn zero_head_gives_bias_logit() {
    let spec = BackboneSpec::desk_tiny(16, vec![4], 4);
    let mut model = build_model(&spec, Init::Random(1)).unwrap();
    model.head_weight.value.iter_mut().for_each(|w| *w = 0.0);
    model.head_bias.value[0] = 0.75;
    let img = random_image(&mut ChaCha8Rng::seed_from_u64(1), 16);
    let check = cam_logit_identity(&model, &img).unwrap();
    assert_eq!(check.cam_side, 0.75);
    assert!((check.logit - 0.75).abs() < 1e-12);
}

#[test]
fn identity_holds_after_training_step() {
    let spec = BackboneSpec::desk_tiny(16, vec![4, 4], 6);
    let mut model = build_model(&spec, Init::Random(3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let images: Vec<_> = (0..4).map(|_| random_image(&mut rng, 16)).collect();
    let (z, cache) = model.forward_train(ClassifierModel::batch(&images).unwrap()).unwrap();
    let (_, g) = batch_loss(&z, &[1, 0, 1, 0], ClassWeights::BALANCED).unwrap();
    model.zero_grad();
    model.backward(cache, &g);
    Adam::new(0.9, 0.999, 1e-8).step(&mut model, 1e-2);
    cam_logit_identity(&model, &images[0]).unwrap().ensure(1e-5).unwrap();
}

#[test]
fn overlay_has_base_dimensions() {
    let base = RawImage::gray(40, 24, 12, vec![4095; 40 * 24]).unwrap();
    let map = ActivationMap { height: 3, width: 3, raw: (0..9).map(f64::from).collect() };
    let out = render_overlay(&base, &map, 0.4, Some(Circle { cx: 5.0, cy: 5.0, radius: 2.0 })).unwrap();
    assert_eq!((out.width(), out.height()), (40, 24));
}

fn feature_maps() -> impl Strategy<Value = FeatureMaps> {
    (1usize..5, 1usize..4, 1usize..4).prop_flat_map(|(k, h, w)| {
        prop::collection::vec(-10.0f64..10.0, k * h * w).prop_map(move |maps| FeatureMaps {
            channels: k,
            height: h,
            width: w,
            maps,
            source_input_size: 0,
        })
    })
}

proptest! {
    #[test]
    fn cam_is_linear_in_weights(f in feature_maps(), seed in any::<u64>(), alpha in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1: Vec<f64> = (0..f.channels).map(|_| rng.random_range(-3.0..3.0)).collect();
        let w2: Vec<f64> = (0..f.channels).map(|_| rng.random_range(-3.0..3.0)).collect();
        let c1 = compute_cam(&f, &w1).unwrap().raw;
        let c2 = compute_cam(&f, &w2).unwrap().raw;
        let scaled: Vec<f64> = w1.iter().map(|w| alpha * w).collect();
        let sum: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        for (s, c) in compute_cam(&f, &scaled).unwrap().raw.iter().zip(&c1) {
            prop_assert!((s - alpha * c).abs() <= 1e-10);
        }
        for ((s, a), b) in compute_cam(&f, &sum).unwrap().raw.iter().zip(&c1).zip(&c2) {
            prop_assert!((s - (a + b)).abs() <= 1e-10);
        }
    }

    #[test]
    fn normalized_map_spans_unit_interval(raw in prop::collection::vec(-100.0f64..100.0, 2..30)) {
        let map = ActivationMap { height: 1, width: raw.len(), raw };
        let n = map.normalized();
        prop_assert!(n.iter().all(|v| (0.0..=1.0).contains(v)));
        let (lo, hi) = map.min_max();
        if hi > lo {
            prop_assert!(n.contains(&0.0) && n.contains(&1.0));
        }
    }
}
