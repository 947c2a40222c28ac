use tch::{nn, Tensor};

use super::init::ParamInit;
use super::layers::{leaky_relu, SpectralConv2d};
use super::SizeProfile;

const LEAKY_SLOPE: f64 = 0.2;

/// PatchGAN discriminator: 4×4 stride-2 spectral-normalized convolutions with
/// leaky ReLU, then a 1-channel 4×4 convolution. Emits raw logits.
#[derive(Debug)]
pub struct Discriminator {
    layers: Vec<SpectralConv2d>,
    head: SpectralConv2d,
}

impl Discriminator {
    pub fn new(p: &nn::Path, profile: &SizeProfile, init: &mut ParamInit) -> Self {
        let mut c_in = 3;
        let mut c_out = profile.base_channels;
        let mut layers = Vec::new();
        for i in 0..profile.discriminator_depth() {
            layers.push(SpectralConv2d::new(&(p / format!("conv{i}")), init, c_in, c_out, 4, 2, 1));
            c_in = c_out;
            c_out *= 2;
        }
        let head = SpectralConv2d::new(&(p / "head"), init, c_in, 1, 4, 1, 1);
        Self { layers, head }
    }

    /// `[N, 3, S, S]` → `[N, 1, G, G]` patch logits.
    pub fn forward(&self, x: &Tensor, update: bool) -> Tensor {
        let mut h = x.shallow_clone();
        for layer in &self.layers {
            h = leaky_relu(&layer.forward(&h, update), LEAKY_SLOPE);
        }
        self.head.forward(&h, update)
    }
}
