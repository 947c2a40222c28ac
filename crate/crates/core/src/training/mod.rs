//! Alternating discriminator/generator optimization.
mod config;
mod log;
mod optim;
mod sampling;
mod schedule;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tch::Tensor;

pub use config::TrainConfig;
pub use log::{read_training_log, LogRecord, TrainingLogWriter};
pub use optim::Adam;
pub use sampling::{sample_real_for_discriminator, sample_real_uniform, sample_target_ages, DatasetIndex};
pub use schedule::lr_schedule;

use crate::age_embedding::{apply_pat, AgeDistribution, AgingBasisMatrix, TargetAge};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::inference::{embedding_for, rounded_targets, transform_images, EmbeddingMode};
use crate::losses::{
    fake_age_loss, generator_objective, hinge_d_loss, hinge_g_loss, identity_l1_loss, mean_variance_loss_from_logits,
    LossReport, LossTerm,
};
use crate::networks::{load_checkpoint, save_checkpoint, FrozenAgeModels, ModelBundle};

pub const ADAM_BETA1: f64 = 0.5;
pub const ADAM_BETA2: f64 = 0.999;

const EPOCH_KEY: &str = "train/epochs_done";

/// One optimization batch.
#[derive(Debug)]
pub struct TrainBatch {
    pub images: Tensor,
    pub labels: Vec<f64>,
    pub targets: Vec<TargetAge>,
    /// Discriminator reals, drawn near each target age.
    pub d_real: Tensor,
}

/// Models, frozen copies and optimizer state of a training run.
#[derive(Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub models: ModelBundle,
    frozen: FrozenAgeModels,
    opt_g: Adam,
    opt_d: Adam,
    epochs_done: usize,
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    let mut z = seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut models = ModelBundle::new(config.profile, config.seed, config.beta_enabled)?;
        models.residual_enabled = config.residual_enabled;
        Self::assemble(config, models)
    }

    fn assemble(config: TrainConfig, models: ModelBundle) -> Result<Self> {
        let frozen = models.frozen_age_models()?;
        let opt_g = Adam::new(models.generator_side_parameters(), config.lr, ADAM_BETA1, ADAM_BETA2);
        let opt_d = Adam::new(models.discriminator_parameters(), config.lr, ADAM_BETA1, ADAM_BETA2);
        Ok(Self { config, models, frozen, opt_g, opt_d, epochs_done: 0 })
    }

    /// Continues from a checkpoint written by [`Trainer::save`].
    pub fn resume(config: TrainConfig, path: impl AsRef<Path>) -> Result<Self> {
        config.validate()?;
        let ckpt = load_checkpoint(path.as_ref(), Some(&config.profile))?;
        if ckpt.bundle.beta_enabled() != config.beta_enabled || ckpt.bundle.residual_enabled != config.residual_enabled {
            return Err(Error::Config("checkpoint flags do not match beta_enabled/residual_enabled".into()));
        }
        let mut t = Self::assemble(config, ckpt.bundle)?;
        t.opt_g.load_state("opt_g", &ckpt.extras)?;
        t.opt_d.load_state("opt_d", &ckpt.extras)?;
        t.epochs_done = ckpt.extras.get(EPOCH_KEY).map(|e| e.int64_value(&[0]) as usize).unwrap_or(0);
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut extras: BTreeMap<String, Tensor> = self.opt_g.state("opt_g");
        extras.extend(self.opt_d.state("opt_d"));
        extras.insert(EPOCH_KEY.into(), Tensor::from_slice(&[self.epochs_done as i64]));
        save_checkpoint(path, &self.models, &extras)
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn frozen(&self) -> &FrozenAgeModels {
        &self.frozen
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.opt_g.lr = lr;
        self.opt_d.lr = lr;
    }

    fn mode(&self) -> EmbeddingMode<'static> {
        EmbeddingMode::SelfEstimated { residual: self.config.residual_enabled }
    }

    fn non_finite(&self, report: &LossReport) -> Error {
        Error::NonFinite { step: self.models.step, report: report.to_string() }
    }

    /// Age losses, reconstruction, fake-age and adversarial terms; one
    /// update of the encoder, estimator, PAT and generator.
    pub fn generator_step(&mut self, batch: &TrainBatch) -> Result<LossReport> {
        let w = self.config.weights;
        self.frozen.sync(&self.models)?;
        let m = &self.models;
        let e = m.encode(&batch.images, true)?;
        let logits = m.estimator.forward(e.tensor());
        let real = mean_variance_loss_from_logits(&logits, &batch.labels, &w)?;
        let p = AgeDistribution::from_logits(&logits);
        let basis = AgingBasisMatrix::from_head(&m.estimator);

        let current = rounded_targets(&p)?;
        let a_rec = embedding_for(&p, &basis, &current, self.mode())?;
        let reconstructed = m.generator.forward(apply_pat(&e, &a_rec, &m.pat)?.tensor());
        let identity = identity_l1_loss(&batch.images, &reconstructed)?;

        let a_t = embedding_for(&p, &basis, &batch.targets, self.mode())?;
        let e_t = apply_pat(&e, &a_t, &m.pat)?;
        let fake = m.generator.forward(e_t.tensor());
        let fake_age = fake_age_loss(&e_t, &fake, &batch.targets, &self.frozen, &w)?;
        let adv = hinge_g_loss(&m.discriminator.forward(&fake, false));

        let total = generator_objective(
            real.total.shallow_clone(),
            fake_age.total.shallow_clone(),
            identity.shallow_clone(),
            adv.shallow_clone(),
            &w,
        );
        let mut report = LossReport::new();
        real.record(&mut report);
        report.set(LossTerm::RealAge, real.total.double_value(&[]));
        report.set(LossTerm::FakeAgeEncoding, fake_age.encoding_level.total.double_value(&[]));
        report.set(LossTerm::FakeAgeImage, fake_age.image_level.total.double_value(&[]));
        report.set(LossTerm::IdentityL1, identity.double_value(&[]));
        report.set(LossTerm::AdvG, adv.double_value(&[]));
        report.set(LossTerm::TotalG, total.double_value(&[]));
        if !report.is_finite() {
            return Err(self.non_finite(&report));
        }
        self.opt_g.zero_grad();
        total.backward();
        self.opt_g.step();
        // The adversarial term also left gradients on the discriminator.
        self.opt_d.zero_grad();
        self.models.step += 1;
        Ok(report)
    }

    /// Hinge loss on near-target reals against detached fakes; one update of
    /// the discriminator.
    pub fn discriminator_step(&mut self, batch: &TrainBatch) -> Result<LossReport> {
        let m = &self.models;
        let fake = tch::no_grad(|| transform_images(m, &batch.images, &batch.targets, self.mode(), false))?.images;
        let real_logits = m.discriminator.forward(&batch.d_real, true);
        let fake_logits = m.discriminator.forward(&fake, true);
        let loss = hinge_d_loss(&real_logits, &fake_logits);
        let value = loss.double_value(&[]);
        let report = LossReport::new().with(LossTerm::AdvD, value).with(LossTerm::TotalD, value);
        if !report.is_finite() {
            return Err(self.non_finite(&report));
        }
        self.opt_d.zero_grad();
        loss.backward();
        self.opt_d.step();
        Ok(report)
    }

    fn target_range(&self, dataset: &Dataset) -> Result<(i64, i64)> {
        match self.config.target_age_range {
            Some([lo, hi]) => Ok((lo, hi)),
            None => dataset.age_range().ok_or_else(|| Error::Validation("empty dataset".into())),
        }
    }

    /// Assembles the batch for `rows`, drawing targets and discriminator reals.
    pub fn make_batch(
        &self,
        dataset: &Dataset,
        index: &DatasetIndex,
        rows: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<TrainBatch> {
        let targets = sample_target_ages(rows.len(), self.target_range(dataset)?, self.config.profile.num_classes, rng)?;
        let d_rows = if self.config.d_sample_near_target {
            sample_real_for_discriminator(index, &targets, self.config.d_sample_window, rng)?
        } else {
            sample_real_uniform(index, rows.len(), rng)?
        };
        Ok(TrainBatch {
            images: dataset.batch(rows),
            labels: rows.iter().map(|&i| dataset.ages[i] as f64).collect(),
            targets,
            d_real: dataset.batch(&d_rows),
        })
    }

    /// Runs the next epoch, passing each step's record to `sink`.
    pub fn train_epoch(
        &mut self,
        dataset: &Dataset,
        index: &DatasetIndex,
        sink: &mut dyn FnMut(&LogRecord) -> Result<()>,
    ) -> Result<()> {
        let epoch = self.epochs_done;
        let lr = lr_schedule(epoch, &self.config)?;
        self.set_lr(lr);
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(self.config.seed, epoch));
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng);
        for rows in order.chunks(self.config.batch_size) {
            let batch = self.make_batch(dataset, index, rows, &mut rng)?;
            let mut report = self.discriminator_step(&batch)?;
            report.merge(&self.generator_step(&batch)?);
            sink(&LogRecord { step: self.models.step, epoch, lr, losses: report })?;
        }
        self.epochs_done += 1;
        Ok(())
    }
}

/// Where [`train`] writes its artifacts.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Checkpoint and log directory; nothing is written when absent.
    pub out_dir: Option<PathBuf>,
    /// Keep `epoch_NNN.safetensors` for every epoch besides the rolling
    /// `checkpoint.safetensors`.
    pub keep_epoch_checkpoints: bool,
    /// Continue from this checkpoint instead of a fresh initialization.
    pub resume: Option<PathBuf>,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.safetensors";
pub const LOG_FILE: &str = "train_log.jsonl";

#[derive(Debug)]
pub struct TrainOutcome {
    pub trainer: Trainer,
    /// Records of the steps run by this call.
    pub log: Vec<LogRecord>,
}

/// Trains until `config.epochs`, checkpointing after initialization and
/// after every epoch. `on_epoch` runs after each epoch's checkpoint.
pub fn train(
    config: &TrainConfig,
    dataset: &Dataset,
    options: &TrainOptions,
    on_epoch: &mut dyn FnMut(&Trainer) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Validation("training dataset is empty".into()));
    }
    if dataset.side() != config.profile.image_side {
        return Err(Error::Config(format!(
            "dataset images are {0}×{0}, profile expects {1}×{1}",
            dataset.side(),
            config.profile.image_side
        )));
    }
    let max_label = dataset.ages.iter().copied().max().unwrap_or(0);
    if max_label > config.profile.max_age() {
        return Err(Error::Config(format!("label {max_label} exceeds the profile's {} classes", config.profile.num_classes)));
    }
    let mut trainer = match &options.resume {
        Some(path) => Trainer::resume(config.clone(), path)?,
        None => Trainer::new(config.clone())?,
    };
    let index = DatasetIndex::new(&dataset.ages);
    let mut writer = match &options.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            if options.resume.is_none() {
                trainer.save(dir.join(CHECKPOINT_FILE))?;
            }
            Some(TrainingLogWriter::open(dir.join(LOG_FILE), options.resume.is_some())?)
        }
        None => None,
    };
    let mut log = Vec::new();
    while trainer.epochs_done() < config.epochs {
        trainer.train_epoch(dataset, &index, &mut |rec| {
            if let Some(w) = writer.as_mut() {
                w.append(rec)?;
            }
            log.push(rec.clone());
            Ok(())
        })?;
        if let Some(dir) = &options.out_dir {
            trainer.save(dir.join(CHECKPOINT_FILE))?;
            if options.keep_epoch_checkpoints {
                trainer.save(dir.join(format!("epoch_{:03}.safetensors", trainer.epochs_done())))?;
            }
        }
        on_epoch(&trainer)?;
    }
    Ok(TrainOutcome { trainer, log })
}
