use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use resage::data::{build_synthetic_dataset, Dataset, Split};
use resage::losses::{hinge_d_loss, LossTerm, LossWeights};
use resage::networks::{ModelBundle, SizeProfile};
use resage::training::*;
use tch::Tensor;

fn tiny_dataset(dir: &std::path::Path) -> Dataset {
    let s = build_synthetic_dataset(dir, 4, 4, &SizeProfile::desk(), 5).unwrap();
    Dataset::load(&s.manifest, &SizeProfile::desk(), None).unwrap()
}

fn config() -> TrainConfig {
    TrainConfig { batch_size: 4, epochs: 2, decay_start_epoch: 1, seed: 3, ..TrainConfig::default() }
}

fn snapshot(vars: Vec<(String, Tensor)>) -> BTreeMap<String, Tensor> {
    vars.into_iter().map(|(n, t)| (n, t.detach().copy())).collect()
}

fn bit_identical(a: &BTreeMap<String, Tensor>, b: &BTreeMap<String, Tensor>) -> bool {
    a.len() == b.len() && a.iter().all(|(k, t)| t.equal(&b[k]))
}

fn first_batch(trainer: &Trainer, data: &Dataset) -> TrainBatch {
    let index = DatasetIndex::new(&data.ages);
    trainer.make_batch(data, &index, &[0, 5, 10, 15], &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
}

#[test]
fn steps_touch_only_their_own_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(dir.path());
    let mut trainer = Trainer::new(config()).unwrap();
    let batch = first_batch(&trainer, &data);

    let g0 = snapshot(trainer.models.generator_side_parameters());
    let d0 = snapshot(trainer.models.discriminator_parameters());
    trainer.discriminator_step(&batch).unwrap();
    assert!(bit_identical(&g0, &snapshot(trainer.models.generator_side_parameters())));
    let d1 = snapshot(trainer.models.discriminator_parameters());
    assert!(!bit_identical(&d0, &d1));

    trainer.generator_step(&batch).unwrap();
    assert!(bit_identical(&d1, &snapshot(trainer.models.discriminator_parameters())));
    assert!(!bit_identical(&g0, &snapshot(trainer.models.generator_side_parameters())));
    for v in trainer.frozen().variables() {
        assert!(!v.grad().defined() || v.grad().abs().max().double_value(&[]) == 0.0);
    }
}

#[test]
fn zero_weights_leave_parameters_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(dir.path());
    let mut trainer = Trainer::new(TrainConfig { weights: LossWeights::zero(), ..config() }).unwrap();
    let batch = first_batch(&trainer, &data);
    let before = snapshot(trainer.models.generator_side_parameters());
    let report = trainer.generator_step(&batch).unwrap();
    assert_eq!(report.get(LossTerm::TotalG), Some(0.0));
    assert!(bit_identical(&before, &snapshot(trainer.models.generator_side_parameters())));
}

#[test]
fn identical_state_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(dir.path());
    let mut a = Trainer::new(config()).unwrap();
    let mut b = Trainer::new(config()).unwrap();
    let batch = first_batch(&a, &data);
    assert_eq!(a.discriminator_step(&batch).unwrap(), b.discriminator_step(&batch).unwrap());
    assert_eq!(a.generator_step(&batch).unwrap(), b.generator_step(&batch).unwrap());
}

#[test]
fn discriminator_loss_matches_independent_hinge() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(dir.path());
    let mut trainer = Trainer::new(config()).unwrap();
    let batch = first_batch(&trainer, &data);
    // Recompute on the logits the step will see (power iteration advances
    // once per forward, so mirror that on a clone of the discriminator state).
    let reference = Trainer::new(config()).unwrap();
    let fake = tch::no_grad(|| {
        resage::inference::transform_images(
            &reference.models,
            &batch.images,
            &batch.targets,
            resage::inference::EmbeddingMode::SelfEstimated { residual: true },
            false,
        )
    })
    .unwrap()
    .images;
    let real_logits = reference.models.discriminator.forward(&batch.d_real, true);
    let fake_logits = reference.models.discriminator.forward(&fake, true);
    let expected = hinge_d_loss(&real_logits, &fake_logits).double_value(&[]);
    let report = trainer.discriminator_step(&batch).unwrap();
    assert_eq!(report.get(LossTerm::AdvD), Some(expected));
}

#[test]
fn zero_epochs_returns_initialized_models() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(&dir.path().join("data"));
    let cfg = TrainConfig { epochs: 0, decay_start_epoch: 0, ..config() };
    let out = dir.path().join("run");
    let outcome = train(&cfg, &data, &TrainOptions { out_dir: Some(out.clone()), ..Default::default() }, &mut |_| Ok(()))
        .unwrap();
    assert!(outcome.log.is_empty());
    assert_eq!(outcome.trainer.models.step, 0);
    assert!(out.join(CHECKPOINT_FILE).exists());
    let fresh = ModelBundle::new(cfg.profile, cfg.seed, true).unwrap();
    let trained = outcome.trainer.models.named_variables();
    for (k, v) in fresh.named_variables() {
        assert!(v.equal(&trained[&k]), "{k}");
    }
}

#[test]
fn resume_at_epoch_boundary_replays_the_next_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(&dir.path().join("data"));
    let cfg = config();
    let full = train(&cfg, &data, &TrainOptions::default(), &mut |_| Ok(())).unwrap();
    assert_eq!(full.log.len(), 8);

    let run = dir.path().join("run");
    let first = TrainConfig { epochs: 1, decay_start_epoch: 1, ..cfg.clone() };
    train(&first, &data, &TrainOptions { out_dir: Some(run.clone()), ..Default::default() }, &mut |_| Ok(())).unwrap();
    let resumed = train(
        &cfg,
        &data,
        &TrainOptions { out_dir: Some(run.clone()), resume: Some(run.join(CHECKPOINT_FILE)), ..Default::default() },
        &mut |_| Ok(()),
    )
    .unwrap();
    assert_eq!(resumed.log, full.log[4..].to_vec());
    assert_eq!(read_training_log(run.join(LOG_FILE)).unwrap().len(), 8);
}

#[test]
fn training_reduces_generator_loss() {
    let dir = tempfile::tempdir().unwrap();
    let s = build_synthetic_dataset(dir.path(), 25, 8, &SizeProfile::desk(), 2).unwrap();
    let data = Dataset::load(&s.manifest, &SizeProfile::desk(), Some(Split::Train)).unwrap();
    let cfg = TrainConfig { batch_size: 8, epochs: 8, decay_start_epoch: 8, seed: 1, ..TrainConfig::default() };
    let outcome = train(&cfg, &data, &TrainOptions::default(), &mut |_| Ok(())).unwrap();
    assert_eq!(outcome.log.len(), 8 * data.len().div_ceil(8));
    let epoch_mean = |e: usize| {
        let v: Vec<f64> =
            outcome.log.iter().filter(|r| r.epoch == e).map(|r| r.losses.get(LossTerm::TotalG).unwrap()).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(epoch_mean(7) < epoch_mean(0), "{} vs {}", epoch_mean(7), epoch_mean(0));
}

#[test]
fn rejects_profile_mismatch_and_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(dir.path());
    let cfg = TrainConfig { profile: SizeProfile::paper(), ..config() };
    assert!(matches!(train(&cfg, &data, &TrainOptions::default(), &mut |_| Ok(())), Err(resage::Error::Config(_))));
    let cfg = TrainConfig { lr: -1.0, ..config() };
    assert!(train(&cfg, &data, &TrainOptions::default(), &mut |_| Ok(())).is_err());
}
