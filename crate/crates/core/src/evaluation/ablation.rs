use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::confusion::{confusion_from_sweep, generate_sweep, AgeGrid, AgeReader, ConfusionMode};
use super::identity::identity_preservation;
use crate::age_embedding::SYNTHETIC_ANCHOR_GROUPS;
use crate::data::Dataset;
use crate::error::Result;
use crate::inference::reconstruct;
use crate::losses::identity_l1_loss;
use crate::networks::ModelBundle;
use crate::training::{train, TrainConfig, TrainOptions};

/// Metrics of one trained model on a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMetrics {
    pub residual_enabled: bool,
    pub steps: u64,
    /// Mean |estimate − target| over the confusion grid, trained estimator.
    pub embedded_age_error: f64,
    /// Mean |oracle readout − target| over the sweep grid.
    pub oracle_age_error: f64,
    /// Mean oracle identity distance between inputs and their sweep outputs.
    pub identity_distance: f64,
    /// Mean L1 between inputs and their self-estimated-age regenerations.
    pub reconstruction_l1: f64,
}

/// Evaluates a trained model with the embedding mode it was trained for.
pub fn evaluate_arm(models: &ModelBundle, test: &Dataset) -> Result<ArmMetrics> {
    let groups = &SYNTHETIC_ANCHOR_GROUPS;
    let confusion = generate_sweep(models, &test.images, AgeGrid::confusion_default(), ConfusionMode::SelfEstimated, groups)?;
    let embedded = confusion_from_sweep(models, &confusion, AgeReader::Embedded)?;
    let sweep = generate_sweep(models, &test.images, AgeGrid::sweep_default(), ConfusionMode::SelfEstimated, groups)?;
    let oracle = confusion_from_sweep(models, &sweep, AgeReader::Oracle)?;
    let ids = identity_preservation(test, &sweep)?;
    let identity_distance = ids.iter().map(|i| i.output_distance).sum::<f64>() / ids.len() as f64;
    let rec = reconstruct(models, &test.images)?;
    Ok(ArmMetrics {
        residual_enabled: models.residual_enabled,
        steps: models.step,
        embedded_age_error: embedded.mean_abs_error(),
        oracle_age_error: oracle.mean_abs_error(),
        identity_distance,
        reconstruction_l1: identity_l1_loss(&test.images, &rec)?.double_value(&[]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub residual: ArmMetrics,
    pub target_only: ArmMetrics,
}

impl AblationReport {
    pub fn to_table(&self) -> String {
        let rows: [(&str, fn(&ArmMetrics) -> String); 5] = [
            ("steps", |m| m.steps.to_string()),
            ("embedded_age_error", |m| format!("{:.4}", m.embedded_age_error)),
            ("oracle_age_error", |m| format!("{:.4}", m.oracle_age_error)),
            ("identity_distance", |m| format!("{:.5}", m.identity_distance)),
            ("reconstruction_l1", |m| format!("{:.5}", m.reconstruction_l1)),
        ];
        let mut s = format!("{:<20} {:>14} {:>14}\n", "metric", "residual_on", "residual_off");
        for (name, f) in rows {
            s.push_str(&format!("{:<20} {:>14} {:>14}\n", name, f(&self.residual), f(&self.target_only)));
        }
        s
    }
}

/// Trains the residual and target-only twins from the same seed and
/// evaluates both on `test`. With an output directory each arm writes its
/// run under `residual_on/` or `residual_off/`.
pub fn ablation_compare(
    config: &TrainConfig,
    train_set: &Dataset,
    test: &Dataset,
    out_dir: Option<PathBuf>,
) -> Result<AblationReport> {
    let mut arms = Vec::with_capacity(2);
    for residual in [true, false] {
        let cfg = TrainConfig { residual_enabled: residual, ..config.clone() };
        let options = TrainOptions {
            out_dir: out_dir.as_ref().map(|d| d.join(if residual { "residual_on" } else { "residual_off" })),
            ..TrainOptions::default()
        };
        let outcome = train(&cfg, train_set, &options, &mut |_| Ok(()))?;
        arms.push(evaluate_arm(&outcome.trainer.models, test)?);
    }
    let target_only = arms.pop().expect("two arms");
    let residual = arms.pop().expect("two arms");
    Ok(AblationReport { residual, target_only })
}
