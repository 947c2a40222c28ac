//! Age distributions, aging bases and the personalized age-embedding
//! transformation (PAT).
//!
//! The estimator's final weight matrix `W_C` (`K × D`) doubles as a table of
//! aging bases: row `j` is the population-typical embedding for age `j`. For
//! a face with predicted age distribution `p` and a target age `t`, the
//! personalized target embedding is
//!
//! ```text
//! ã = (Σ_j p_j·a_j − a_[m]) + a_t
//! ```
//!
//! where `m` is the distribution mean and `[m]` its half-up rounding. The
//! bracketed residual keeps what is specific to the person; `a_t` adds the
//! shared appearance of the target age. `ã` is projected to per-channel scale
//! and shift coefficients that modulate the identity encoding.
//!
//! All tensors are batched along the first dimension.
use serde::{Deserialize, Serialize};
use tch::{nn, Kind, Tensor};

use crate::error::{Error, Result};
use crate::networks::{EstimatorHead, IdentityEncoding};

const NORMALIZATION_TOL: f64 = 1e-6;

/// Row-stochastic `[N, K]` matrix of age-class probabilities.
#[derive(Debug)]
pub struct AgeDistribution {
    probs: Tensor,
}

impl AgeDistribution {
    /// Validates that every row is non-negative and sums to one within 1e-6.
    pub fn new(probs: Tensor) -> Result<Self> {
        let probs = if probs.dim() == 1 { probs.unsqueeze(0) } else { probs };
        if probs.dim() != 2 || probs.size()[1] < 1 {
            return Err(Error::Validation(format!("expected [N, K] probabilities, got {:?}", probs.size())));
        }
        let d = probs.detach().to_kind(Kind::Double);
        let min = d.min().double_value(&[]);
        if !(min >= 0.0) {
            return Err(Error::Validation(format!("negative or non-finite probability {min}")));
        }
        let worst = (d.sum_dim_intlist([1i64].as_slice(), false, None::<Kind>) - 1.0).abs().max().double_value(&[]);
        if !(worst <= NORMALIZATION_TOL) {
            return Err(Error::Validation(format!("probabilities do not sum to one (off by {worst:e})")));
        }
        Ok(Self { probs })
    }

    /// Softmax over the class dimension of `[N, K]` logits (differentiable).
    pub fn from_logits(logits: &Tensor) -> Self {
        Self { probs: logits.softmax(-1, None::<Kind>) }
    }

    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    pub fn num_classes(&self) -> i64 {
        self.probs.size()[1]
    }

    pub fn batch(&self) -> i64 {
        self.probs.size()[0]
    }

    pub fn stats(&self) -> AgeDistributionStats {
        distribution_stats(self)
    }
}

/// Mean, variance and half-up rounded mean of each distribution.
#[derive(Debug)]
pub struct AgeDistributionStats {
    /// `m = Σ_j j·p_j`, `[N]`, differentiable.
    pub mean: Tensor,
    /// `v = Σ_j p_j·(j − m)²`, `[N]`, differentiable.
    pub variance: Tensor,
    /// `[m]`, half-up rounding of the mean.
    pub rounded: Vec<i64>,
}

impl AgeDistributionStats {
    pub fn mean_values(&self) -> Vec<f64> {
        to_f64_vec(&self.mean)
    }

    pub fn variance_values(&self) -> Vec<f64> {
        to_f64_vec(&self.variance)
    }
}

pub(crate) fn to_f64_vec(t: &Tensor) -> Vec<f64> {
    Vec::<f64>::try_from(&t.detach().to_kind(Kind::Double).flatten(0, -1)).expect("numeric tensor")
}

/// Half-up rounding, the `[m]` bracket.
pub fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

fn class_ages(k: i64, like: &Tensor) -> Tensor {
    Tensor::arange(k, (like.kind(), like.device()))
}

pub fn distribution_stats(p: &AgeDistribution) -> AgeDistributionStats {
    let probs = p.probs();
    let ages = class_ages(p.num_classes(), probs);
    let mean = (probs * &ages).sum_dim_intlist([1i64].as_slice(), false, None::<Kind>);
    let centered = ages.unsqueeze(0) - mean.unsqueeze(1);
    let variance = (probs * centered.square()).sum_dim_intlist([1i64].as_slice(), false, None::<Kind>);
    let k = p.num_classes();
    let rounded = to_f64_vec(&mean).into_iter().map(|m| round_half_up(m).clamp(0, k - 1)).collect();
    AgeDistributionStats { mean, variance, rounded }
}

/// Softmax of the estimator head's logits for a batch of encodings.
pub fn estimate_distribution(encoding: &IdentityEncoding, head: &EstimatorHead) -> Result<AgeDistribution> {
    let d = head.weight().size()[1];
    let size = encoding.tensor().size();
    if size.len() != 4 || size[1] != d {
        return Err(Error::Contract(format!("encoding {size:?} does not match estimator width {d}")));
    }
    Ok(AgeDistribution::from_logits(&head.forward(encoding.tensor())))
}

/// A target age in years; fractional values are allowed.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct TargetAge(f64);

impl TargetAge {
    /// Validates `0 ≤ value ≤ K − 1`.
    pub fn new(value: f64, num_classes: i64) -> Result<Self> {
        let max = (num_classes - 1) as f64;
        if !(0.0..=max).contains(&value) {
            return Err(Error::Validation(format!("target age {value} outside [0, {max}]")));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn batch(values: &[f64], num_classes: i64) -> Result<Vec<TargetAge>> {
        values.iter().map(|&v| TargetAge::new(v, num_classes)).collect()
    }
}

/// `[N, D]` embedding vectors (`ã`, or bare aging bases).
#[derive(Debug)]
pub struct PersonalizedAgeEmbedding(pub Tensor);

impl PersonalizedAgeEmbedding {
    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn dim(&self) -> i64 {
        self.0.size()[1]
    }

    /// Values of row `i`.
    pub fn row(&self, i: i64) -> Vec<f64> {
        to_f64_vec(&self.0.get(i))
    }
}

/// The `K × D` aging-basis matrix `W_C`.
#[derive(Debug)]
pub struct AgingBasisMatrix(Tensor);

impl AgingBasisMatrix {
    pub fn new(weights: Tensor) -> Result<Self> {
        if weights.dim() != 2 {
            return Err(Error::Validation(format!("basis matrix must be 2-D, got {:?}", weights.size())));
        }
        if !bool::try_from(weights.isfinite().all()).unwrap_or(false) {
            return Err(Error::Validation("basis matrix has non-finite entries".into()));
        }
        Ok(Self(weights))
    }

    /// `W_C` of an estimator head; differentiable with respect to the head.
    pub fn from_head(head: &EstimatorHead) -> Self {
        Self(head.weight())
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn num_classes(&self) -> i64 {
        self.0.size()[0]
    }

    pub fn dim(&self) -> i64 {
        self.0.size()[1]
    }

    fn rows(&self, indices: &[i64]) -> Tensor {
        let idx = Tensor::from_slice(indices).to_device(self.0.device());
        self.0.index_select(0, &idx)
    }

    /// Row `j` as a fresh `[1, D]` tensor (never a view into `W_C`).
    pub fn aging_basis(&self, j: i64) -> Result<PersonalizedAgeEmbedding> {
        let k = self.num_classes();
        if !(0..k).contains(&j) {
            return Err(Error::Index { index: j, len: k });
        }
        Ok(PersonalizedAgeEmbedding(self.rows(&[j])))
    }

    /// `(1 − f)·a_⌊t⌋ + f·a_⌈t⌉` with `f = t − ⌊t⌋`, one row per target.
    pub fn fractional_basis(&self, targets: &[TargetAge]) -> Result<PersonalizedAgeEmbedding> {
        let k = self.num_classes();
        let mut lo = Vec::with_capacity(targets.len());
        let mut hi = Vec::with_capacity(targets.len());
        let mut frac = Vec::with_capacity(targets.len());
        for t in targets {
            let v = t.value();
            if !(0.0..=(k - 1) as f64).contains(&v) {
                return Err(Error::Validation(format!("target age {v} outside [0, {}]", k - 1)));
            }
            let floor = v.floor();
            lo.push(floor as i64);
            hi.push(v.ceil() as i64);
            frac.push(v - floor);
        }
        let f = Tensor::from_slice(&frac).to_kind(self.0.kind()).unsqueeze(1);
        let below = self.rows(&lo);
        let above = self.rows(&hi);
        // Exact rows for integral targets: (1 - 0)·a + 0·a == a bit for bit.
        Ok(PersonalizedAgeEmbedding(&below * (1.0 - &f) + &above * &f))
    }
}

/// Personalized target embedding for a batch: residual of the self-estimated age plus
/// the target basis. With `residual = false` only the target basis is used.
pub fn personalized_target_embedding(
    p: &AgeDistribution,
    w: &AgingBasisMatrix,
    targets: &[TargetAge],
) -> Result<PersonalizedAgeEmbedding> {
    let target = w.fractional_basis(targets)?;
    add_residual(p, w, target)
}

/// `Σ_j p_j·a_j − a_[m]` for each row of `p`.
pub fn residual_embedding(p: &AgeDistribution, w: &AgingBasisMatrix) -> Result<Tensor> {
    if p.num_classes() != w.num_classes() {
        return Err(Error::Contract(format!(
            "distribution over {} classes, basis matrix has {}",
            p.num_classes(),
            w.num_classes()
        )));
    }
    let personal = p.probs().matmul(w.tensor());
    let current = w.rows(&p.stats().rounded);
    Ok(personal - current)
}

fn add_residual(
    p: &AgeDistribution,
    w: &AgingBasisMatrix,
    target: PersonalizedAgeEmbedding,
) -> Result<PersonalizedAgeEmbedding> {
    if target.0.size()[0] != p.batch() {
        return Err(Error::Contract(format!("{} targets for {} distributions", target.0.size()[0], p.batch())));
    }
    Ok(PersonalizedAgeEmbedding(residual_embedding(p, w)? + target.0))
}

/// Target-basis selection used during training and inference.
pub fn target_embedding(
    p: &AgeDistribution,
    w: &AgingBasisMatrix,
    targets: &[TargetAge],
    residual: bool,
) -> Result<PersonalizedAgeEmbedding> {
    if residual {
        personalized_target_embedding(p, w, targets)
    } else {
        w.fractional_basis(targets)
    }
}

/// Inclusive age range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeGroup {
    pub lo: i64,
    pub hi: i64,
}

impl AgeGroup {
    pub const fn new(lo: i64, hi: i64) -> Self {
        Self { lo, hi }
    }

    pub fn center(&self) -> f64 {
        (self.lo + self.hi) as f64 / 2.0
    }
}

/// The four anchor groups (<30, 30–39, 40–49, 50+) restricted to the
/// synthetic age span 15–70.
pub const SYNTHETIC_ANCHOR_GROUPS: [AgeGroup; 4] =
    [AgeGroup::new(15, 29), AgeGroup::new(30, 39), AgeGroup::new(40, 49), AgeGroup::new(50, 70)];

fn validate_groups(groups: &[AgeGroup], k: i64) -> Result<()> {
    if groups.is_empty() {
        return Err(Error::Validation("no age groups given".into()));
    }
    for (i, g) in groups.iter().enumerate() {
        if g.lo > g.hi || g.lo < 0 || g.hi >= k {
            return Err(Error::Validation(format!("age group {}–{} is empty or outside [0, {}]", g.lo, g.hi, k - 1)));
        }
        if i > 0 && groups[i - 1].hi + 1 != g.lo {
            return Err(Error::Validation(format!(
                "age groups must be sorted and contiguous: {}–{} then {}–{}",
                groups[i - 1].lo,
                groups[i - 1].hi,
                g.lo,
                g.hi
            )));
        }
    }
    Ok(())
}

/// Group-anchor baseline: each group's anchor is the mean of its basis rows,
/// placed at the group's center age; targets are linearly interpolated
/// between the two bracketing anchors and clamped outside the anchor span.
pub fn anchor_interpolation_embedding(
    w: &AgingBasisMatrix,
    groups: &[AgeGroup],
    targets: &[TargetAge],
) -> Result<PersonalizedAgeEmbedding> {
    validate_groups(groups, w.num_classes())?;
    let (first, last) = (groups[0].lo as f64, groups[groups.len() - 1].hi as f64);
    let anchors: Vec<Tensor> = groups
        .iter()
        .map(|g| w.tensor().narrow(0, g.lo, g.hi - g.lo + 1).mean_dim([0i64].as_slice(), false, None::<Kind>))
        .collect();
    let centers: Vec<f64> = groups.iter().map(AgeGroup::center).collect();
    let mut rows = Vec::with_capacity(targets.len());
    for t in targets {
        let t = t.value();
        if !(first..=last).contains(&t) {
            return Err(Error::Validation(format!("target age {t} outside the grouped range {first}–{last}")));
        }
        let row = if t <= centers[0] {
            anchors[0].shallow_clone()
        } else if t >= centers[centers.len() - 1] {
            anchors[anchors.len() - 1].shallow_clone()
        } else {
            let i = centers.windows(2).position(|c| c[0] <= t && t <= c[1]).expect("bracketed");
            let f = (t - centers[i]) / (centers[i + 1] - centers[i]);
            &anchors[i] * (1.0 - f) + &anchors[i + 1] * f
        };
        rows.push(row);
    }
    Ok(PersonalizedAgeEmbedding(Tensor::stack(&rows, 0)))
}

/// Residual embedding plus the anchor-interpolated target basis in place of `a_t`.
pub fn interpolated_target_embedding(
    p: &AgeDistribution,
    w: &AgingBasisMatrix,
    groups: &[AgeGroup],
    targets: &[TargetAge],
) -> Result<PersonalizedAgeEmbedding> {
    let target = anchor_interpolation_embedding(w, groups, targets)?;
    add_residual(p, w, target)
}

/// Learned affine projections `γ(ã)` and `β(ã)` (both `R^D → R^D`).
///
/// Weights start at zero and `γ` carries a constant `+1`, so a fresh module
/// is the identity modulation.
#[derive(Debug)]
pub struct PatParameters {
    gamma_weight: Tensor,
    gamma_bias: Tensor,
    beta: Option<(Tensor, Tensor)>,
}

impl PatParameters {
    pub fn new(p: &nn::Path, dim: i64, beta_enabled: bool) -> Self {
        let zeros = |name: &str, dims: &[i64]| p.var(name, dims, nn::Init::Const(0.0));
        let gamma_weight = zeros("gamma_weight", &[dim, dim]);
        let gamma_bias = zeros("gamma_bias", &[dim]);
        let beta = beta_enabled.then(|| (zeros("beta_weight", &[dim, dim]), zeros("beta_bias", &[dim])));
        Self { gamma_weight, gamma_bias, beta }
    }

    pub fn beta_enabled(&self) -> bool {
        self.beta.is_some()
    }

    pub fn dim(&self) -> i64 {
        self.gamma_bias.size()[0]
    }

    /// `[N, D]` scale coefficients.
    pub fn gamma(&self, a: &PersonalizedAgeEmbedding) -> Tensor {
        a.tensor().linear(&self.gamma_weight, Some(&self.gamma_bias)) + 1.0
    }

    /// `[N, D]` shift coefficients, `None` when the shift is disabled.
    pub fn beta(&self, a: &PersonalizedAgeEmbedding) -> Option<Tensor> {
        self.beta.as_ref().map(|(w, b)| a.tensor().linear(w, Some(b)))
    }
}

/// Identity encoding after age modulation; same shape as its source.
#[derive(Debug)]
pub struct TransformedEncoding(pub Tensor);

impl TransformedEncoding {
    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

/// `e'[n, c, h, w] = γ[n, c]·e[n, c, h, w] + β[n, c]`.
pub fn modulate(e: &Tensor, gamma: &Tensor, beta: Option<&Tensor>) -> Tensor {
    let scaled = e * gamma.unsqueeze(-1).unsqueeze(-1);
    match beta {
        Some(b) => scaled + b.unsqueeze(-1).unsqueeze(-1),
        None => scaled,
    }
}

pub fn apply_pat(
    e: &IdentityEncoding,
    a_tilde: &PersonalizedAgeEmbedding,
    params: &PatParameters,
) -> Result<TransformedEncoding> {
    let size = e.tensor().size();
    if size.len() != 4 || size[1] != a_tilde.dim() || a_tilde.dim() != params.dim() {
        return Err(Error::Contract(format!(
            "encoding {size:?}, embedding width {}, PAT width {}",
            a_tilde.dim(),
            params.dim()
        )));
    }
    if size[0] != a_tilde.tensor().size()[0] {
        return Err(Error::Contract(format!("{} encodings for {} embeddings", size[0], a_tilde.tensor().size()[0])));
    }
    let gamma = params.gamma(a_tilde);
    let beta = params.beta(a_tilde);
    Ok(TransformedEncoding(modulate(e.tensor(), &gamma, beta.as_ref())))
}
