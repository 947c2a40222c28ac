use tch::{nn, Tensor};

use super::init::ParamInit;
use super::layers::{SpectralConv2d, SpectralResBlock};
use super::SizeProfile;

pub const ENCODER_RES_BLOCKS: usize = 6;

/// Identity encoder `E`: 7×7 conv, two stride-2 3×3 convs, six residual
/// blocks; every convolution spectral-normalized, ReLU activations.
#[derive(Debug)]
pub struct Encoder {
    stem: SpectralConv2d,
    down1: SpectralConv2d,
    down2: SpectralConv2d,
    blocks: Vec<SpectralResBlock>,
}

impl Encoder {
    pub fn new(p: &nn::Path, profile: &SizeProfile, init: &mut ParamInit) -> Self {
        let c = profile.base_channels;
        let stem = SpectralConv2d::new(&(p / "stem"), init, 3, c, 7, 1, 3);
        let down1 = SpectralConv2d::new(&(p / "down1"), init, c, 2 * c, 3, 2, 1);
        let down2 = SpectralConv2d::new(&(p / "down2"), init, 2 * c, 4 * c, 3, 2, 1);
        let blocks = (0..ENCODER_RES_BLOCKS)
            .map(|i| SpectralResBlock::new(&(p / format!("res{i}")), init, 4 * c))
            .collect();
        Self { stem, down1, down2, blocks }
    }

    /// Maps `[N, 3, S, S]` images to `[N, D, S/4, S/4]` encodings. `update`
    /// advances the spectral-norm power iterations.
    pub fn forward(&self, x: &Tensor, update: bool) -> Tensor {
        let mut h = self.stem.forward(x, update).relu();
        h = self.down1.forward(&h, update).relu();
        h = self.down2.forward(&h, update).relu();
        for block in &self.blocks {
            h = block.forward(&h, update);
        }
        h
    }

    pub fn spectral_convs(&self) -> Vec<&SpectralConv2d> {
        let mut convs = vec![&self.stem, &self.down1, &self.down2];
        for block in &self.blocks {
            convs.extend(block.convs());
        }
        convs
    }
}
