//! Forward passes shared by training, evaluation and the command line.
use tch::Tensor;

use crate::age_embedding::{
    apply_pat, interpolated_target_embedding, target_embedding, AgeDistribution, AgeGroup, AgingBasisMatrix,
    PersonalizedAgeEmbedding, TargetAge, TransformedEncoding,
};
use crate::error::{Error, Result};
use crate::networks::{IdentityEncoding, ModelBundle};

/// How the target embedding is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EmbeddingMode<'a> {
    /// Self-estimated residual plus the target's own basis row (just the
    /// basis row when `residual` is false).
    SelfEstimated { residual: bool },
    /// Self-estimated residual plus a basis interpolated between group anchors.
    Interpolated(&'a [AgeGroup]),
}

impl EmbeddingMode<'_> {
    /// The mode the bundle was trained for.
    pub fn trained(models: &ModelBundle) -> EmbeddingMode<'static> {
        EmbeddingMode::SelfEstimated { residual: models.residual_enabled }
    }
}

/// Intermediate results of one age transformation.
#[derive(Debug)]
pub struct Transformed {
    pub encoding: IdentityEncoding,
    pub distribution: AgeDistribution,
    pub embedding: PersonalizedAgeEmbedding,
    pub transformed: TransformedEncoding,
    pub images: Tensor,
}

/// `G(PAT(E(x), ã))`. Differentiable when called outside `no_grad`;
/// spectral-norm power iterations run only when `update` is set.
pub fn transform_images(
    models: &ModelBundle,
    x: &Tensor,
    targets: &[TargetAge],
    mode: EmbeddingMode,
    update: bool,
) -> Result<Transformed> {
    let encoding = models.encode(x, update)?;
    let distribution = AgeDistribution::from_logits(&models.estimator.forward(encoding.tensor()));
    let basis = AgingBasisMatrix::from_head(&models.estimator);
    let embedding = embedding_for(&distribution, &basis, targets, mode)?;
    let transformed = apply_pat(&encoding, &embedding, &models.pat)?;
    let images = models.generator.forward(transformed.tensor());
    Ok(Transformed { encoding, distribution, embedding, transformed, images })
}

pub fn embedding_for(
    p: &AgeDistribution,
    basis: &AgingBasisMatrix,
    targets: &[TargetAge],
    mode: EmbeddingMode,
) -> Result<PersonalizedAgeEmbedding> {
    match mode {
        EmbeddingMode::SelfEstimated { residual } => target_embedding(p, basis, targets, residual),
        EmbeddingMode::Interpolated(groups) => interpolated_target_embedding(p, basis, groups, targets),
    }
}

/// Rounded self-estimated ages as targets.
pub fn rounded_targets(p: &AgeDistribution) -> Result<Vec<TargetAge>> {
    let k = p.num_classes();
    p.stats().rounded.iter().map(|&r| TargetAge::new(r as f64, k)).collect()
}

const CHUNK: i64 = 32;

fn chunks(x: &Tensor) -> Result<Vec<(i64, Tensor)>> {
    if x.dim() != 4 {
        return Err(Error::Contract(format!("expected an image batch [N, 3, S, S], got {:?}", x.size())));
    }
    let n = x.size()[0];
    Ok((0..n).step_by(CHUNK as usize).map(|s| (s, x.narrow(0, s, CHUNK.min(n - s)))).collect())
}

/// Age-transformed images, computed without gradients in chunks.
pub fn age_transform(models: &ModelBundle, x: &Tensor, targets: &[TargetAge], mode: EmbeddingMode) -> Result<Tensor> {
    if targets.len() as i64 != x.size().first().copied().unwrap_or(-1) {
        return Err(Error::Contract(format!("{} targets for {:?} images", targets.len(), x.size())));
    }
    tch::no_grad(|| {
        let mut out = Vec::new();
        for (start, part) in chunks(x)? {
            let t = &targets[start as usize..start as usize + part.size()[0] as usize];
            out.push(transform_images(models, &part, t, mode, false)?.images);
        }
        Ok(Tensor::cat(&out, 0))
    })
}

/// Self-estimated ages `m` of each image.
pub fn estimate_ages(models: &ModelBundle, x: &Tensor) -> Result<Vec<f64>> {
    tch::no_grad(|| {
        let mut out = Vec::new();
        for (_, part) in chunks(x)? {
            let e = models.encode(&part, false)?;
            out.extend(AgeDistribution::from_logits(&models.estimator.forward(e.tensor())).stats().mean_values());
        }
        Ok(out)
    })
}

/// Regeneration at each image's own rounded self-estimated age.
pub fn reconstruct(models: &ModelBundle, x: &Tensor) -> Result<Tensor> {
    tch::no_grad(|| {
        let mut out = Vec::new();
        for (_, part) in chunks(x)? {
            let e = models.encode(&part, false)?;
            let p = AgeDistribution::from_logits(&models.estimator.forward(e.tensor()));
            let basis = AgingBasisMatrix::from_head(&models.estimator);
            let t = rounded_targets(&p)?;
            let a = embedding_for(&p, &basis, &t, EmbeddingMode::trained(models))?;
            out.push(models.generator.forward(apply_pat(&e, &a, &models.pat)?.tensor()));
        }
        Ok(Tensor::cat(&out, 0))
    })
}
