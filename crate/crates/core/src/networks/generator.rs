use tch::{nn, Tensor};

use super::init::ParamInit;
use super::layers::{instance_norm, Conv2d, InstanceResBlock, UpConv2d};
use super::SizeProfile;

pub const GENERATOR_RES_BLOCKS: usize = 3;

/// Generator `G`: three instance-normalized residual blocks, two stride-2
/// transposed convolutions, and a 7×7 convolution with tanh output.
#[derive(Debug)]
pub struct Generator {
    blocks: Vec<InstanceResBlock>,
    up1: UpConv2d,
    up2: UpConv2d,
    head: Conv2d,
}

impl Generator {
    pub fn new(p: &nn::Path, profile: &SizeProfile, init: &mut ParamInit) -> Self {
        let c = profile.base_channels;
        let blocks = (0..GENERATOR_RES_BLOCKS)
            .map(|i| InstanceResBlock::new(&(p / format!("res{i}")), init, 4 * c))
            .collect();
        let up1 = UpConv2d::new(&(p / "up1"), init, 4 * c, 2 * c);
        let up2 = UpConv2d::new(&(p / "up2"), init, 2 * c, c);
        let head = Conv2d::new(&(p / "head"), init, c, 3, 7, 1, 3);
        Self { blocks, up1, up2, head }
    }

    /// Maps `[N, D, S/4, S/4]` encodings to `[N, 3, S, S]` images in `[-1, 1]`.
    pub fn forward(&self, e: &Tensor) -> Tensor {
        let mut h = e.shallow_clone();
        for block in &self.blocks {
            h = block.forward(&h);
        }
        h = instance_norm(&self.up1.forward(&h)).relu();
        h = instance_norm(&self.up2.forward(&h)).relu();
        self.head.forward(&h).tanh()
    }
}
