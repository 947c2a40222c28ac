use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use super::groups::{group_target_age, HalfOpenGroup};
use crate::age_embedding::TargetAge;
use crate::error::{Error, Result};
use crate::inference::{age_transform, EmbeddingMode};
use crate::networks::ModelBundle;

/// Tolerance for symmetry and for negative eigenvalues of a covariance.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Mean and covariance of a feature distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Contract(format!("mean of length {d}, covariance {}×{}", cov.nrows(), cov.ncols())));
        }
        let scale = cov.amax().max(1.0);
        if (&cov - cov.transpose()).amax() > PSD_TOLERANCE * scale {
            return Err(Error::Validation("covariance is not symmetric".into()));
        }
        let min_eig = SymmetricEigen::new(cov.clone()).eigenvalues.min();
        if d > 0 && min_eig < -PSD_TOLERANCE * scale {
            return Err(Error::Validation(format!("covariance has eigenvalue {min_eig:e} < 0")));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `A^{1/2}` of a symmetric matrix, negative eigenvalues clamped to zero.
pub fn symmetric_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Fréchet distance `‖μa − μb‖² + tr(Σa + Σb − 2(Σa Σb)^{1/2})`.
///
/// The trace of `(Σa Σb)^{1/2}` is taken as the trace of the symmetric
/// square root of `Σa^{1/2} Σb Σa^{1/2}`, which has the same eigenvalues.
pub fn fid(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Contract(format!("feature dimensions differ: {} vs {}", a.dim(), b.dim())));
    }
    let diff = &a.mean - &b.mean;
    let sa = symmetric_sqrt(&a.cov);
    let m = &sa * &b.cov * &sa;
    let m = (&m + m.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(m).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    let d = diff.norm_squared() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

/// Maps an image batch `[N, 3, S, S]` to one feature vector per image.
pub trait FeatureExtractor {
    fn features(&self, images: &Tensor) -> Result<Vec<Vec<f64>>>;
}

/// Globally pooled identity encodings of a trained encoder.
#[derive(Debug, Clone, Copy)]
pub struct EncoderFeatures<'a>(pub &'a ModelBundle);

impl FeatureExtractor for EncoderFeatures<'_> {
    fn features(&self, images: &Tensor) -> Result<Vec<Vec<f64>>> {
        tch::no_grad(|| {
            let mut out = Vec::new();
            let n = images.size()[0];
            for start in (0..n).step_by(32) {
                let part = images.narrow(0, start, 32.min(n - start));
                let e = self.0.encode(&part, false)?;
                let pooled = e.tensor().mean_dim([2i64, 3].as_slice(), false, Kind::Double);
                for row in 0..pooled.size()[0] {
                    out.push(Vec::<f64>::try_from(&pooled.get(row))?);
                }
            }
            Ok(out)
        })
    }
}

/// Sample mean and unbiased covariance.
pub fn feature_stats(features: &[Vec<f64>]) -> Result<GaussianStats> {
    let n = features.len();
    if n < 2 {
        return Err(Error::Validation(format!("need at least 2 samples for covariance, got {n}")));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::Contract("feature vectors of different lengths".into()));
    }
    let x = DMatrix::from_fn(n, d, |i, j| features[i][j]);
    let mean = DVector::from_fn(d, |j, _| x.column(j).mean());
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let cov = (&cov + cov.transpose()) * 0.5;
    GaussianStats::new(mean, cov)
}

pub fn image_stats(images: &Tensor, extractor: &dyn FeatureExtractor) -> Result<GaussianStats> {
    feature_stats(&extractor.features(images)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFid {
    pub group: HalfOpenGroup,
    pub real: usize,
    pub generated: usize,
    pub fid: f64,
}

/// Per group: FID between the real images already in the group and the
/// images from outside it aged into it.
pub fn group_fid(
    models: &ModelBundle,
    x: &Tensor,
    ages: &[i64],
    groups: &[HalfOpenGroup],
    extractor: &dyn FeatureExtractor,
) -> Result<Vec<GroupFid>> {
    if ages.len() as i64 != x.size()[0] {
        return Err(Error::Validation(format!("{} ages for {:?} images", ages.len(), x.size())));
    }
    let k = models.profile.num_classes;
    let mut out = Vec::with_capacity(groups.len());
    for &g in groups {
        let (inside, outside): (Vec<usize>, Vec<usize>) = (0..ages.len()).partition(|&i| g.contains(ages[i]));
        if inside.len() < 2 || outside.len() < 2 {
            return Err(Error::Validation(format!(
                "group {} has {} real and {} source images; need at least 2 of each",
                g.label(),
                inside.len(),
                outside.len()
            )));
        }
        let select = |rows: &[usize]| x.index_select(0, &Tensor::from_slice(&rows.iter().map(|&r| r as i64).collect::<Vec<_>>()));
        let targets = outside
            .iter()
            .map(|&i| TargetAge::new(group_target_age(ages[i], g)? as f64, k))
            .collect::<Result<Vec<_>>>()?;
        let generated = age_transform(models, &select(&outside), &targets, EmbeddingMode::trained(models))?;
        let fid = fid(&image_stats(&select(&inside), extractor)?, &image_stats(&generated, extractor)?)?;
        out.push(GroupFid { group: g, real: inside.len(), generated: outside.len(), fid });
    }
    Ok(out)
}
