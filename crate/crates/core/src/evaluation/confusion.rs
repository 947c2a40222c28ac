use serde::{Deserialize, Serialize};
use tch::Tensor;

use crate::age_embedding::{AgeGroup, TargetAge, SYNTHETIC_ANCHOR_GROUPS};
use crate::data::{oracle_age_readout, unstack_images};
use crate::error::{Error, Result};
use crate::inference::{age_transform, estimate_ages, EmbeddingMode};
use crate::networks::ModelBundle;

/// Inclusive target-age grid `lo, lo + step, …` up to `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeGrid {
    pub lo: i64,
    pub hi: i64,
    pub step: i64,
}

impl AgeGrid {
    pub fn new(lo: i64, hi: i64, step: i64) -> Result<Self> {
        if step < 1 || lo > hi {
            return Err(Error::Validation(format!("invalid age grid {lo}..{hi} step {step}")));
        }
        Ok(Self { lo, hi, step })
    }

    /// 25 to 65 in steps of 3.
    pub fn confusion_default() -> Self {
        Self { lo: 25, hi: 65, step: 3 }
    }

    /// 20 to 64 in steps of 4.
    pub fn sweep_default() -> Self {
        Self { lo: 20, hi: 64, step: 4 }
    }

    pub fn ages(&self) -> Vec<i64> {
        (self.lo..=self.hi).step_by(self.step as usize).collect()
    }
}

/// How the target embedding is formed for the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfusionMode {
    SelfEstimated,
    Interpolated,
}

impl ConfusionMode {
    pub fn name(self) -> &'static str {
        match self {
            ConfusionMode::SelfEstimated => "self_estimated",
            ConfusionMode::Interpolated => "interpolated",
        }
    }

    fn embedding<'a>(self, models: &ModelBundle, groups: &'a [AgeGroup]) -> EmbeddingMode<'a> {
        match self {
            ConfusionMode::SelfEstimated => EmbeddingMode::trained(models),
            ConfusionMode::Interpolated => EmbeddingMode::Interpolated(groups),
        }
    }
}

/// Who reads ages off generated images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeReader {
    /// The jointly trained estimator (distribution mean).
    Embedded,
    /// The analytic synthetic-face oracle.
    Oracle,
}

impl AgeReader {
    /// One estimate per image; `None` where the oracle cannot read it.
    pub fn read(self, models: &ModelBundle, images: &Tensor) -> Result<Vec<Option<f64>>> {
        match self {
            AgeReader::Embedded => Ok(estimate_ages(models, images)?.into_iter().map(Some).collect()),
            AgeReader::Oracle => Ok(unstack_images(images)?.iter().map(|i| oracle_age_readout(i).age()).collect()),
        }
    }
}

/// Generations of every input at every grid target.
#[derive(Debug)]
pub struct Sweep {
    pub grid: AgeGrid,
    pub mode: ConfusionMode,
    /// One `[N, 3, S, S]` batch per grid age.
    pub outputs: Vec<Tensor>,
}

fn require_trained(models: &ModelBundle) -> Result<()> {
    if models.step == 0 {
        return Err(Error::Validation(
            "models have never been trained (step 0); evaluate a trained checkpoint".into(),
        ));
    }
    Ok(())
}

/// Ages every image of `x` to every grid target.
pub fn generate_sweep(
    models: &ModelBundle,
    x: &Tensor,
    grid: AgeGrid,
    mode: ConfusionMode,
    groups: &[AgeGroup],
) -> Result<Sweep> {
    require_trained(models)?;
    let n = x.size().first().copied().unwrap_or(0);
    if n == 0 {
        return Err(Error::Validation("empty test set".into()));
    }
    let k = models.profile.num_classes;
    let mut outputs = Vec::new();
    for t in grid.ages() {
        let targets = vec![TargetAge::new(t as f64, k)?; n as usize];
        outputs.push(age_transform(models, x, &targets, mode.embedding(models, groups))?);
    }
    Ok(Sweep { grid, mode, outputs })
}

/// Per-target distribution of estimated ages on the same grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub mode: ConfusionMode,
    pub reader: AgeReader,
    pub grid: AgeGrid,
    pub targets: Vec<i64>,
    /// `counts[i][j]`: estimates for target `i` nearest to grid age `j`
    /// (clamped to the grid ends).
    pub counts: Vec<Vec<u32>>,
    /// Mean estimate per target over readable outputs.
    pub means: Vec<f64>,
    /// Mean `|estimate − target|` per target.
    pub abs_errors: Vec<f64>,
    pub unreadable: Vec<u32>,
}

impl ConfusionMatrix {
    pub fn from_estimates(
        mode: ConfusionMode,
        reader: AgeReader,
        grid: AgeGrid,
        estimates: &[Vec<Option<f64>>],
    ) -> Result<Self> {
        let targets = grid.ages();
        if estimates.len() != targets.len() {
            return Err(Error::Contract(format!("{} estimate rows for {} targets", estimates.len(), targets.len())));
        }
        let cols = targets.len();
        let mut counts = vec![vec![0u32; cols]; cols];
        let mut means = Vec::with_capacity(cols);
        let mut abs_errors = Vec::with_capacity(cols);
        let mut unreadable = Vec::with_capacity(cols);
        for (i, row) in estimates.iter().enumerate() {
            let readable: Vec<f64> = row.iter().flatten().copied().collect();
            unreadable.push((row.len() - readable.len()) as u32);
            for &e in &readable {
                let j = ((e - grid.lo as f64) / grid.step as f64).round().clamp(0.0, (cols - 1) as f64) as usize;
                counts[i][j] += 1;
            }
            let n = readable.len() as f64;
            if readable.is_empty() {
                means.push(f64::NAN);
                abs_errors.push(f64::NAN);
            } else {
                means.push(readable.iter().sum::<f64>() / n);
                abs_errors.push(readable.iter().map(|e| (e - targets[i] as f64).abs()).sum::<f64>() / n);
            }
        }
        Ok(Self { mode, reader, grid, targets, counts, means, abs_errors, unreadable })
    }

    /// Mean absolute target error over all readable outputs; unreadable
    /// outputs count as an error of the grid span.
    pub fn mean_abs_error(&self) -> f64 {
        let span = (self.grid.hi - self.grid.lo).max(1) as f64;
        let mut total = 0.0;
        let mut n = 0.0;
        for (i, err) in self.abs_errors.iter().enumerate() {
            let readable: u32 = self.counts[i].iter().sum();
            if readable > 0 {
                total += err * readable as f64;
            }
            total += span * self.unreadable[i] as f64;
            n += (readable + self.unreadable[i]) as f64;
        }
        if n == 0.0 {
            f64::NAN
        } else {
            total / n
        }
    }
}

/// Reads every output of a sweep into a confusion matrix.
pub fn confusion_from_sweep(models: &ModelBundle, sweep: &Sweep, reader: AgeReader) -> Result<ConfusionMatrix> {
    let estimates = sweep.outputs.iter().map(|o| reader.read(models, o)).collect::<Result<Vec<_>>>()?;
    ConfusionMatrix::from_estimates(sweep.mode, reader, sweep.grid, &estimates)
}

/// Generates the sweep for `mode` and reads it with `reader`.
pub fn continuous_confusion_matrix(
    models: &ModelBundle,
    x: &Tensor,
    grid: AgeGrid,
    mode: ConfusionMode,
    reader: AgeReader,
) -> Result<ConfusionMatrix> {
    let sweep = generate_sweep(models, x, grid, mode, &SYNTHETIC_ANCHOR_GROUPS)?;
    confusion_from_sweep(models, &sweep, reader)
}
