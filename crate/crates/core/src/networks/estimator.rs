use tch::{nn, Kind, Tensor};

use super::init::ParamInit;
use super::SizeProfile;

/// Age estimator head `C`: global average pooling followed by a
/// weight-normalized, bias-free linear layer producing `K` logits.
///
/// Row `j` of the effective weight is `g_j · v_j / ‖v_j‖`; these rows double
/// as the aging bases.
#[derive(Debug)]
pub struct EstimatorHead {
    direction: Tensor,
    scale: Tensor,
}

impl EstimatorHead {
    pub fn new(p: &nn::Path, profile: &SizeProfile, init: &mut ParamInit) -> Self {
        let (k, d) = (profile.num_classes, profile.encoding_channels);
        let direction = p.var_copy("direction", &init.normal(&[k, d], super::layers::INIT_STD));
        let scale = p.var_copy("scale", &Tensor::ones([k], (Kind::Float, p.device())));
        Self { direction, scale }
    }

    /// Unit-norm direction rows `v_j / ‖v_j‖`.
    pub fn unit_directions(&self) -> Tensor {
        let norms = self.direction.norm_scalaropt_dim(2.0, [1], true);
        &self.direction / norms
    }

    /// Effective `K × D` weight `W_C` (differentiable).
    pub fn weight(&self) -> Tensor {
        self.unit_directions() * self.scale.unsqueeze(1)
    }

    pub fn scale(&self) -> &Tensor {
        &self.scale
    }

    /// The bias is fixed at zero.
    pub fn bias(&self) -> Tensor {
        Tensor::zeros([self.scale.size()[0]], (self.scale.kind(), self.scale.device()))
    }

    /// `[N, D, H, W]` encodings → `[N, K]` logits.
    pub fn forward(&self, e: &Tensor) -> Tensor {
        let pooled = e.mean_dim([2i64, 3].as_slice(), false, None::<Kind>);
        pooled.matmul(&self.weight().tr())
    }
}
