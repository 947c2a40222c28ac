use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network size parameters. Shapes are quoted as `side × side × channels`;
/// tensors themselves are laid out NCHW.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeProfile {
    pub image_side: i64,
    pub base_channels: i64,
    pub encoding_side: i64,
    /// `D`, the channel count of the identity encoding.
    pub encoding_channels: i64,
    /// `K`, the number of age classes. Class `j` is age `j` years.
    pub num_classes: i64,
}

impl SizeProfile {
    /// 256×256 inputs, 64×64×256 encodings.
    pub const fn paper() -> Self {
        Self {
            image_side: 256,
            base_channels: 64,
            encoding_side: 64,
            encoding_channels: 256,
            num_classes: 100,
        }
    }

    /// 64×64 inputs, 16×16×64 encodings; trainable on a CPU.
    pub const fn desk() -> Self {
        Self {
            image_side: 64,
            base_channels: 16,
            encoding_side: 16,
            encoding_channels: 64,
            num_classes: 100,
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::Config(format!("unknown profile '{other}' (expected paper or desk)"))),
        }
    }

    pub fn name(&self) -> Option<&'static str> {
        if *self == Self::paper() {
            Some("paper")
        } else if *self == Self::desk() {
            Some("desk")
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("invalid size profile {self:?}: {msg}")));
        if self.image_side < 32 || self.image_side % 16 != 0 {
            return bad("image_side must be a multiple of 16 and at least 32".into());
        }
        if self.encoding_side * 4 != self.image_side {
            return bad("encoding_side must equal image_side / 4".into());
        }
        if self.base_channels < 1 || self.encoding_channels != 4 * self.base_channels {
            return bad("encoding_channels must equal 4 × base_channels".into());
        }
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2".into());
        }
        Ok(())
    }

    /// Number of stride-2 convolutions in the patch discriminator.
    pub fn discriminator_depth(&self) -> i64 {
        if self.image_side >= 256 {
            4
        } else {
            3
        }
    }

    /// Side of the discriminator's logit grid: each 4×4 stride-2 layer
    /// (padding 1) halves the side, the final 4×4 stride-1 layer removes one.
    pub fn discriminator_output_side(&self) -> i64 {
        (self.image_side >> self.discriminator_depth()) - 1
    }

    pub fn max_age(&self) -> i64 {
        self.num_classes - 1
    }
}

impl Default for SizeProfile {
    fn default() -> Self {
        Self::desk()
    }
}
