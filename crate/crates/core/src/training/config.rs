use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::networks::SizeProfile;

/// Training hyper-parameters. Each field is also a key of the TOML config
/// file; unknown keys are rejected.
///
/// ```toml
/// profile = "desk"
/// batch_size = 8
/// epochs = 12
/// decay_start_epoch = 6
/// target_age_range = [15, 70]
///
/// [weights]
/// lambda_age = 0.05
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    #[serde(serialize_with = "profile_ser", deserialize_with = "profile_de")]
    pub profile: SizeProfile,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    /// First epoch of the linear decay to zero.
    pub decay_start_epoch: usize,
    pub weights: LossWeights,
    pub seed: u64,
    /// Inclusive range of training target ages; the dataset's observed label
    /// range when absent.
    pub target_age_range: Option<[i64; 2]>,
    /// Discriminator reals are drawn within this many years of the target.
    pub d_sample_window: i64,
    /// `false` draws discriminator reals from the whole dataset.
    pub d_sample_near_target: bool,
    pub beta_enabled: bool,
    /// `false` replaces the personalized embedding with the bare target basis.
    pub residual_enabled: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            profile: SizeProfile::desk(),
            batch_size: 8,
            epochs: 200,
            lr: 2e-4,
            decay_start_epoch: 100,
            weights: LossWeights::default(),
            seed: 0,
            target_age_range: None,
            d_sample_window: 5,
            d_sample_near_target: true,
            beta_enabled: true,
            residual_enabled: true,
        }
    }
}

fn profile_ser<S: Serializer>(p: &SizeProfile, s: S) -> std::result::Result<S::Ok, S::Error> {
    match p.name() {
        Some(name) => s.serialize_str(name),
        None => p.serialize(s),
    }
}

fn profile_de<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<SizeProfile, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Name(String),
        Explicit(SizeProfile),
    }
    match Repr::deserialize(d)? {
        Repr::Name(name) => SizeProfile::named(&name).map_err(serde::de::Error::custom),
        Repr::Explicit(p) => Ok(p),
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Every problem with the config, in field order.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = self.profile.validate() {
            out.push(e.to_string());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            out.push(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            out.push("batch_size must be at least 1".into());
        }
        if self.decay_start_epoch > self.epochs {
            out.push(format!(
                "decay_start_epoch ({}) exceeds epochs ({})",
                self.decay_start_epoch, self.epochs
            ));
        }
        if let Err(e) = self.weights.validate() {
            out.push(e.to_string());
        }
        if let Some([lo, hi]) = self.target_age_range {
            if lo > hi || lo < 0 || hi > self.profile.max_age() {
                out.push(format!(
                    "target_age_range [{lo}, {hi}] must be non-empty and within [0, {}]",
                    self.profile.max_age()
                ));
            }
        }
        if self.d_sample_window < 0 {
            out.push(format!("d_sample_window must be non-negative, got {}", self.d_sample_window));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}
