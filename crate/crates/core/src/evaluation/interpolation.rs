use tch::Tensor;

use crate::age_embedding::TargetAge;
use crate::error::{Error, Result};
use crate::inference::{transform_images, EmbeddingMode};
use crate::networks::ModelBundle;

/// Decodes `G((1 − α)·e_a + α·e_b)` for `n_steps` evenly spaced `α ∈ [0, 1]`,
/// where `e_a`, `e_b` are the two images' transformed encodings at target
/// `t`. Returns `[n_steps, 3, S, S]`; each frame is decoded on its own.
pub fn identity_interpolation(
    models: &ModelBundle,
    img_a: &Tensor,
    img_b: &Tensor,
    t: TargetAge,
    n_steps: usize,
) -> Result<Tensor> {
    if n_steps < 2 {
        return Err(Error::Validation(format!("need at least 2 interpolation steps, got {n_steps}")));
    }
    let as_batch = |x: &Tensor| if x.dim() == 3 { x.unsqueeze(0) } else { x.shallow_clone() };
    let (a, b) = (as_batch(img_a), as_batch(img_b));
    if a.size() != b.size() || a.size()[0] != 1 {
        return Err(Error::Contract(format!("expected two single images, got {:?} and {:?}", a.size(), b.size())));
    }
    tch::no_grad(|| {
        let mode = EmbeddingMode::trained(models);
        let ea = transform_images(models, &a, &[t], mode, false)?.transformed.0;
        let eb = transform_images(models, &b, &[t], mode, false)?.transformed.0;
        let frames = (0..n_steps)
            .map(|i| {
                let alpha = i as f64 / (n_steps - 1) as f64;
                models.generator.forward(&(&ea * (1.0 - alpha) + &eb * alpha))
            })
            .collect::<Vec<_>>();
        Ok(Tensor::cat(&frames, 0))
    })
}
