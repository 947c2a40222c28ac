mod common;

use std::collections::BTreeMap;

use common::values;
use resage::age_embedding::{estimate_distribution, AgingBasisMatrix};
use resage::networks::*;
use tch::{Device, Kind, Tensor};

fn images(profile: &SizeProfile, n: i64, seed: i64) -> Tensor {
    tch::manual_seed(seed);
    Tensor::rand([n, 3, profile.image_side, profile.image_side], (Kind::Float, Device::Cpu)) * 2.0 - 1.0
}

fn check_profile(profile: SizeProfile, n: i64) {
    let models = ModelBundle::new(profile, 7, true).unwrap();
    let x = images(&profile, n, 1);
    tch::no_grad(|| {
        let e = models.encode(&x, false).unwrap();
        assert_eq!(
            e.tensor().size(),
            vec![n, profile.encoding_channels, profile.encoding_side, profile.encoding_side]
        );
        let p = estimate_distribution(&e, &models.estimator).unwrap();
        assert_eq!(p.probs().size(), vec![n, profile.num_classes]);
        let sums = values(&p.probs().sum_dim_intlist([1i64].as_slice(), false, Kind::Double));
        assert!(sums.iter().all(|s| (s - 1.0).abs() <= 1e-6), "{sums:?}");

        let y = models.generator.forward(e.tensor());
        assert_eq!(y.size(), vec![n, 3, profile.image_side, profile.image_side]);
        let (lo, hi) = (y.min().double_value(&[]), y.max().double_value(&[]));
        assert!(lo >= -1.0 && hi <= 1.0, "{lo} {hi}");

        let g = profile.discriminator_output_side();
        assert_eq!(models.discriminator.forward(&x, false).size(), vec![n, 1, g, g]);
    });
    let norms = values(&models.estimator.unit_directions().norm_scalaropt_dim(2.0, [1], false));
    assert_eq!(norms.len() as i64, profile.num_classes);
    assert!(norms.iter().all(|v| (v - 1.0).abs() <= 1e-5));
    let w = AgingBasisMatrix::from_head(&models.estimator);
    assert_eq!(w.tensor().size(), vec![profile.num_classes, profile.encoding_channels]);
}

#[test]
fn desk_profile_shapes_and_ranges() {
    check_profile(SizeProfile::desk(), 3);
}

#[test]
fn paper_profile_shapes_and_ranges() {
    check_profile(SizeProfile::paper(), 1);
}

#[test]
fn encoder_rejects_wrong_input_shape() {
    let models = ModelBundle::new(SizeProfile::desk(), 0, true).unwrap();
    let x = Tensor::zeros([1, 3, 32, 32], (Kind::Float, Device::Cpu));
    assert!(matches!(models.encode(&x, false), Err(resage::Error::Contract(_))));
}

#[test]
fn spectral_normalization_starts_at_unit_norm() {
    let models = ModelBundle::new(SizeProfile::desk(), 3, true).unwrap();
    for conv in models.encoder.spectral_convs() {
        let s = conv.normalized_spectral_norm();
        assert!((s - 1.0).abs() <= 1e-4, "{s}");
    }
}

#[test]
fn power_iteration_only_advances_on_update() {
    let models = ModelBundle::new(SizeProfile::desk(), 4, true).unwrap();
    let x = images(&SizeProfile::desk(), 2, 2);
    let before = models.encoder.snapshot();
    let _ = tch::no_grad(|| models.encoder.forward(&x, false));
    let after = models.encoder.snapshot();
    assert!(before.iter().all(|(k, v)| v.equal(&after[k])));
}

#[test]
fn same_seed_same_parameters() {
    let a = ModelBundle::new(SizeProfile::desk(), 11, true).unwrap().named_variables();
    let b = ModelBundle::new(SizeProfile::desk(), 11, true).unwrap().named_variables();
    let c = ModelBundle::new(SizeProfile::desk(), 12, true).unwrap().named_variables();
    assert!(a.iter().all(|(k, v)| v.equal(&b[k])));
    assert!(a.iter().any(|(k, v)| !v.equal(&c[k])));
}

#[test]
fn frozen_copies_match_and_do_not_train() {
    let models = ModelBundle::new(SizeProfile::desk(), 5, true).unwrap();
    let frozen = models.frozen_age_models().unwrap();
    assert!(frozen.is_frozen());
    let live = models.encoder.snapshot();
    for (k, v) in frozen.encoder.snapshot() {
        assert!(v.equal(&live[&k]), "{k}");
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.safetensors");
    let mut models = ModelBundle::new(SizeProfile::desk(), 6, false).unwrap();
    models.step = 17;
    models.residual_enabled = false;
    let mut extras = BTreeMap::new();
    extras.insert("opt/steps".to_string(), Tensor::from_slice(&[3i64]));
    save_checkpoint(&path, &models, &extras).unwrap();

    let loaded = load_checkpoint(&path, Some(&SizeProfile::desk())).unwrap();
    assert_eq!(loaded.bundle.step, 17);
    assert!(!loaded.bundle.residual_enabled);
    assert!(!loaded.bundle.beta_enabled());
    let original = models.named_variables();
    let restored = loaded.bundle.named_variables();
    assert_eq!(original.len(), restored.len());
    assert!(original.iter().all(|(k, v)| v.equal(&restored[k])));
    assert_eq!(loaded.extras["opt/steps"].int64_value(&[0]), 3);

    assert!(matches!(load_checkpoint(&path, Some(&SizeProfile::paper())), Err(resage::Error::Config(_))));
    assert!(load_checkpoint(dir.path().join("missing.safetensors"), None).is_err());
    let mut clash = BTreeMap::new();
    clash.insert("meta/step".to_string(), Tensor::from_slice(&[0i64]));
    assert!(save_checkpoint(dir.path().join("x.safetensors"), &models, &clash).is_err());
}
