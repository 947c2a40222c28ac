//! Training objectives.
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use crate::age_embedding::{distribution_stats, AgeDistribution, TargetAge, TransformedEncoding};
use crate::error::{Error, Result};
use crate::networks::{EstimatorHead, FrozenAgeModels, IdentityEncoding};

/// Balancing coefficients of the joint objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_mv1: f64,
    pub lambda_mv2: f64,
    pub lambda_fake1: f64,
    pub lambda_fake2: f64,
    pub lambda_age: f64,
    pub lambda_idt: f64,
    pub lambda_adv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_mv1: 0.05,
            lambda_mv2: 0.005,
            lambda_fake1: 0.4,
            lambda_fake2: 1.0,
            lambda_age: 0.05,
            lambda_idt: 1.0,
            lambda_adv: 1.0,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            lambda_mv1: 0.0,
            lambda_mv2: 0.0,
            lambda_fake1: 0.0,
            lambda_fake2: 0.0,
            lambda_age: 0.0,
            lambda_idt: 0.0,
            lambda_adv: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda_mv1", self.lambda_mv1),
            ("lambda_mv2", self.lambda_mv2),
            ("lambda_fake1", self.lambda_fake1),
            ("lambda_fake2", self.lambda_fake2),
            ("lambda_age", self.lambda_age),
            ("lambda_idt", self.lambda_idt),
            ("lambda_adv", self.lambda_adv),
        ];
        for (name, v) in all {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        Ok(())
    }
}

/// Named scalars reported by a training step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTerm {
    SoftmaxTerm,
    MeanTerm,
    VarianceTerm,
    RealAge,
    FakeAgeEncoding,
    FakeAgeImage,
    IdentityL1,
    AdvG,
    AdvD,
    TotalG,
    TotalD,
}

impl LossTerm {
    pub const ALL: [LossTerm; 11] = [
        LossTerm::SoftmaxTerm,
        LossTerm::MeanTerm,
        LossTerm::VarianceTerm,
        LossTerm::RealAge,
        LossTerm::FakeAgeEncoding,
        LossTerm::FakeAgeImage,
        LossTerm::IdentityL1,
        LossTerm::AdvG,
        LossTerm::AdvD,
        LossTerm::TotalG,
        LossTerm::TotalD,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossTerm::SoftmaxTerm => "softmax_term",
            LossTerm::MeanTerm => "mean_term",
            LossTerm::VarianceTerm => "variance_term",
            LossTerm::RealAge => "real_age",
            LossTerm::FakeAgeEncoding => "fake_age_encoding",
            LossTerm::FakeAgeImage => "fake_age_image",
            LossTerm::IdentityL1 => "identity_l1",
            LossTerm::AdvG => "adv_g",
            LossTerm::AdvD => "adv_d",
            LossTerm::TotalG => "total_g",
            LossTerm::TotalD => "total_d",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LossReport {
    values: BTreeMap<LossTerm, f64>,
}

impl LossReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, term: LossTerm, value: f64) {
        self.values.insert(term, value);
    }

    pub fn with(mut self, term: LossTerm, value: f64) -> Self {
        self.set(term, value);
        self
    }

    pub fn get(&self, term: LossTerm) -> Option<f64> {
        self.values.get(&term).copied()
    }

    pub fn require(&self, term: LossTerm) -> Result<f64> {
        self.get(term)
            .ok_or_else(|| Error::Contract(format!("loss report is missing '{}'", term.name())))
    }

    pub fn iter(&self) -> impl Iterator<Item = (LossTerm, f64)> + '_ {
        self.values.iter().map(|(k, v)| (*k, *v))
    }

    pub fn is_finite(&self) -> bool {
        self.values.values().all(|v| v.is_finite())
    }

    /// Adds every entry of `other`, overwriting duplicates.
    pub fn merge(&mut self, other: &LossReport) {
        self.values.extend(other.values.iter().map(|(k, v)| (*k, *v)));
    }
}

impl fmt::Display for LossReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in &self.values {
            if !first {
                write!(f, " ")?;
            }
            first = false;
            write!(f, "{}={v:.6}", k.name())?;
        }
        Ok(())
    }
}

/// Batch-averaged components of the mean-variance loss.
#[derive(Debug)]
pub struct MeanVarianceLoss {
    /// Cross-entropy `−log p_y`.
    pub softmax: Tensor,
    /// `½(m − y)²`.
    pub mean: Tensor,
    /// Distribution variance `v`.
    pub variance: Tensor,
    /// `softmax + λ_mv1·mean + λ_mv2·variance`.
    pub total: Tensor,
}

impl MeanVarianceLoss {
    pub fn record(&self, report: &mut LossReport) {
        report.set(LossTerm::SoftmaxTerm, self.softmax.double_value(&[]));
        report.set(LossTerm::MeanTerm, self.mean.double_value(&[]));
        report.set(LossTerm::VarianceTerm, self.variance.double_value(&[]));
    }
}

/// Two-point soft labels: a fractional target `y` puts `1 − f` on `⌊y⌋` and
/// `f` on `⌈y⌉`.
fn soft_labels(targets: &[f64], k: i64, like: &Tensor) -> Result<Tensor> {
    let mut q = vec![0f64; targets.len() * k as usize];
    for (i, &y) in targets.iter().enumerate() {
        if !(0.0..=(k - 1) as f64).contains(&y) {
            return Err(Error::Validation(format!("age label {y} outside [0, {}]", k - 1)));
        }
        let lo = y.floor();
        let f = y - lo;
        q[i * k as usize + lo as usize] += 1.0 - f;
        if f > 0.0 {
            q[i * k as usize + y.ceil() as usize] += f;
        }
    }
    Ok(Tensor::from_slice(&q).reshape([targets.len() as i64, k]).to_kind(like.kind()).to_device(like.device()))
}

fn mean_variance_terms(
    p: &AgeDistribution,
    log_p: &Tensor,
    targets: &[f64],
    weights: &LossWeights,
) -> Result<MeanVarianceLoss> {
    if targets.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    if targets.len() as i64 != p.batch() {
        return Err(Error::Contract(format!("{} labels for {} distributions", targets.len(), p.batch())));
    }
    let q = soft_labels(targets, p.num_classes(), log_p)?;
    let unused = q.eq(0.0);
    let softmax = -(&q * log_p.masked_fill(&unused, 0.0)).sum_dim_intlist([1i64].as_slice(), false, None::<Kind>);
    let stats = distribution_stats(p);
    let y = Tensor::from_slice(targets).to_kind(stats.mean.kind());
    let mean = (&stats.mean - y).square() * 0.5;
    let variance = stats.variance;
    let softmax = softmax.mean(None::<Kind>);
    let mean = mean.mean(None::<Kind>);
    let variance = variance.mean(None::<Kind>);
    let total = &softmax + &mean * weights.lambda_mv1 + &variance * weights.lambda_mv2;
    Ok(MeanVarianceLoss { softmax, mean, variance, total })
}

/// `−log p_y + (λ_mv1/2)(m − y)² + λ_mv2·v`, averaged over the batch.
pub fn mean_variance_loss(p: &AgeDistribution, targets: &[f64], weights: &LossWeights) -> Result<MeanVarianceLoss> {
    let log_p = p.probs().log();
    mean_variance_terms(p, &log_p, targets, weights)
}

/// Same loss computed from logits with a log-softmax.
pub fn mean_variance_loss_from_logits(
    logits: &Tensor,
    targets: &[f64],
    weights: &LossWeights,
) -> Result<MeanVarianceLoss> {
    let log_p = logits.log_softmax(-1, None::<Kind>);
    let p = AgeDistribution::from_logits(logits);
    mean_variance_terms(&p, &log_p, targets, weights)
}

/// Supervised age loss on real images.
pub fn real_age_loss(
    encoding: &IdentityEncoding,
    labels: &[f64],
    head: &EstimatorHead,
    weights: &LossWeights,
) -> Result<MeanVarianceLoss> {
    if labels.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    mean_variance_loss_from_logits(&head.forward(encoding.tensor()), labels, weights)
}

/// `λ_fake1·enc + λ_fake2·img`.
pub fn weighted_fake_age<T>(encoding_level: T, image_level: T, weights: &LossWeights) -> T
where
    T: Mul<f64, Output = T> + Add<Output = T>,
{
    encoding_level * weights.lambda_fake1 + image_level * weights.lambda_fake2
}

#[derive(Debug)]
pub struct FakeAgeLoss {
    pub encoding_level: MeanVarianceLoss,
    pub image_level: MeanVarianceLoss,
    pub total: Tensor,
}

/// Age loss of the transformed encoding (through `Ĉ`) and of the generated
/// image (through `Ê` then `Ĉ`) against the target ages. `frozen` must be
/// parameter-frozen; gradients reach the inputs only through activations.
pub fn fake_age_loss(
    transformed: &TransformedEncoding,
    generated: &Tensor,
    targets: &[TargetAge],
    frozen: &FrozenAgeModels,
    weights: &LossWeights,
) -> Result<FakeAgeLoss> {
    if !frozen.is_frozen() {
        return Err(Error::Contract("fake-age loss requires parameter-frozen estimator and encoder copies".into()));
    }
    let t: Vec<f64> = targets.iter().map(|t| t.value()).collect();
    let encoding_level = mean_variance_loss_from_logits(&frozen.estimator.forward(transformed.tensor()), &t, weights)?;
    let regenerated = frozen.encoder.forward(generated, false);
    let image_level = mean_variance_loss_from_logits(&frozen.estimator.forward(&regenerated), &t, weights)?;
    let total = weighted_fake_age(encoding_level.total.shallow_clone(), image_level.total.shallow_clone(), weights);
    Ok(FakeAgeLoss { encoding_level, image_level, total })
}

/// Mean absolute difference over batch, channels and pixels.
pub fn identity_l1_loss(x: &Tensor, reconstructed: &Tensor) -> Result<Tensor> {
    if x.size() != reconstructed.size() {
        return Err(Error::Contract(format!(
            "image shapes differ: {:?} vs {:?}",
            x.size(),
            reconstructed.size()
        )));
    }
    Ok((x - reconstructed).abs().mean(None::<Kind>))
}

/// `mean(max(1 − D(real), 0)) + mean(max(1 + D(fake), 0))`.
pub fn hinge_d_loss(real_logits: &Tensor, fake_logits: &Tensor) -> Tensor {
    (-real_logits + 1.0).relu().mean(None::<Kind>) + (fake_logits + 1.0).relu().mean(None::<Kind>)
}

/// `mean(−D(fake))`; unbounded below.
pub fn hinge_g_loss(fake_logits: &Tensor) -> Tensor {
    -fake_logits.mean(None::<Kind>)
}

/// `λ_age·(real + fake) + λ_idt·idt + λ_adv·adv`.
pub fn generator_objective<T>(real: T, fake: T, identity: T, adv: T, weights: &LossWeights) -> T
where
    T: Mul<f64, Output = T> + Add<Output = T>,
{
    (real + fake) * weights.lambda_age + identity * weights.lambda_idt + adv * weights.lambda_adv
}

/// Total generator loss recomputed from a report's components.
pub fn total_generator_loss(components: &LossReport, weights: &LossWeights) -> Result<f64> {
    let fake = weighted_fake_age(
        components.require(LossTerm::FakeAgeEncoding)?,
        components.require(LossTerm::FakeAgeImage)?,
        weights,
    );
    Ok(generator_objective(
        components.require(LossTerm::RealAge)?,
        fake,
        components.require(LossTerm::IdentityL1)?,
        components.require(LossTerm::AdvG)?,
        weights,
    ))
}
