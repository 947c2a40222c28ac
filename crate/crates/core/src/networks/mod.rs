//! Encoder, generator, estimator head and discriminator, plus the bundle that
//! owns their parameters and the checkpoint format.
mod checkpoint;
mod discriminator;
mod encoder;
mod estimator;
mod generator;
pub mod init;
pub mod layers;
mod profile;

use std::collections::BTreeMap;
use std::ops::Deref;

use tch::{nn, Device, Kind, Tensor};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use discriminator::Discriminator;
pub use encoder::{Encoder, ENCODER_RES_BLOCKS};
pub use estimator::EstimatorHead;
pub use generator::{Generator, GENERATOR_RES_BLOCKS};
pub use profile::SizeProfile;

use crate::age_embedding::PatParameters;
use crate::error::{Error, Result};
use init::ParamInit;

/// Output of the encoder: `[N, D, S/4, S/4]`.
#[derive(Debug)]
pub struct IdentityEncoding(pub Tensor);

impl IdentityEncoding {
    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn channels(&self) -> i64 {
        self.0.size()[1]
    }
}

/// A network together with the variable store that owns its parameters.
#[derive(Debug)]
pub struct Collection<T> {
    pub store: nn::VarStore,
    pub net: T,
}

impl<T> Deref for Collection<T> {
    type Target = T;

    fn deref(&self) -> &T {
        &self.net
    }
}

impl<T> Collection<T> {
    fn build(f: impl FnOnce(&nn::Path) -> T) -> Self {
        let store = nn::VarStore::new(Device::Cpu);
        let net = f(&store.root());
        Self { store, net }
    }

    /// Deep copies of every variable (trainable or not), keyed by name.
    pub fn snapshot(&self) -> BTreeMap<String, Tensor> {
        tch::no_grad(|| {
            self.store.variables().into_iter().map(|(name, t)| (name, t.copy())).collect()
        })
    }

    pub fn trainable(&self) -> Vec<Tensor> {
        self.store.trainable_variables()
    }

    /// `true` when no variable in the store tracks gradients.
    pub fn is_frozen(&self) -> bool {
        self.store.variables().values().all(|t| !t.requires_grad())
    }

    pub fn all_finite(&self) -> bool {
        self.store
            .variables()
            .values()
            .all(|t| bool::try_from(t.isfinite().all()).unwrap_or(false))
    }

    /// Overwrites this collection's values with `src`'s.
    pub fn copy_from(&mut self, src: &Collection<T>) -> Result<()> {
        self.store.copy(&src.store)?;
        Ok(())
    }
}

fn check(profile: &SizeProfile) -> Result<()> {
    profile.validate()
}

pub fn build_encoder(profile: &SizeProfile, seed: u64) -> Result<Collection<Encoder>> {
    check(profile)?;
    let mut init = ParamInit::new(seed);
    Ok(Collection::build(|p| Encoder::new(p, profile, &mut init)))
}

pub fn build_generator(profile: &SizeProfile, seed: u64) -> Result<Collection<Generator>> {
    check(profile)?;
    let mut init = ParamInit::new(seed);
    Ok(Collection::build(|p| Generator::new(p, profile, &mut init)))
}

pub fn build_estimator_head(profile: &SizeProfile, seed: u64) -> Result<Collection<EstimatorHead>> {
    check(profile)?;
    let mut init = ParamInit::new(seed);
    Ok(Collection::build(|p| EstimatorHead::new(p, profile, &mut init)))
}

pub fn build_discriminator(profile: &SizeProfile, seed: u64) -> Result<Collection<Discriminator>> {
    check(profile)?;
    let mut init = ParamInit::new(seed);
    Ok(Collection::build(|p| Discriminator::new(p, profile, &mut init)))
}

pub fn build_pat(profile: &SizeProfile, beta_enabled: bool) -> Result<Collection<PatParameters>> {
    check(profile)?;
    Ok(Collection::build(|p| PatParameters::new(p, profile.encoding_channels, beta_enabled)))
}

/// SplitMix64 step, used to give each network its own seed.
fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed.wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// All learnable networks of the model.
#[derive(Debug)]
pub struct ModelBundle {
    pub profile: SizeProfile,
    pub encoder: Collection<Encoder>,
    pub estimator: Collection<EstimatorHead>,
    pub pat: Collection<PatParameters>,
    pub generator: Collection<Generator>,
    pub discriminator: Collection<Discriminator>,
    /// Optimizer steps taken so far.
    pub step: u64,
    /// Whether targets are embedded with the self-estimated residual; set
    /// from the training config and stored with checkpoints.
    pub residual_enabled: bool,
}

impl ModelBundle {
    pub fn new(profile: SizeProfile, seed: u64, beta_enabled: bool) -> Result<Self> {
        Ok(Self {
            profile,
            encoder: build_encoder(&profile, derive_seed(seed, 1))?,
            estimator: build_estimator_head(&profile, derive_seed(seed, 2))?,
            pat: build_pat(&profile, beta_enabled)?,
            generator: build_generator(&profile, derive_seed(seed, 3))?,
            discriminator: build_discriminator(&profile, derive_seed(seed, 4))?,
            step: 0,
            residual_enabled: true,
        })
    }

    pub fn beta_enabled(&self) -> bool {
        self.pat.beta_enabled()
    }

    /// Converts every parameter to `kind` (e.g. `Kind::Double` for gradient checks).
    pub fn set_kind(&mut self, kind: Kind) {
        self.encoder.store.set_kind(kind);
        self.estimator.store.set_kind(kind);
        self.pat.store.set_kind(kind);
        self.generator.store.set_kind(kind);
        self.discriminator.store.set_kind(kind);
    }

    pub fn kind(&self) -> Kind {
        self.estimator.scale().kind()
    }

    /// Trainable parameters updated by the generator-side objective.
    pub fn generator_side_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (prefix, store) in [
            ("encoder", &self.encoder.store),
            ("estimator", &self.estimator.store),
            ("pat", &self.pat.store),
            ("generator", &self.generator.store),
        ] {
            out.extend(named_trainable(prefix, store));
        }
        out
    }

    pub fn discriminator_parameters(&self) -> Vec<(String, Tensor)> {
        named_trainable("discriminator", &self.discriminator.store)
    }

    pub fn encode(&self, x: &Tensor, update: bool) -> Result<IdentityEncoding> {
        let size = x.size();
        let s = self.profile.image_side;
        if size.len() != 4 || size[1] != 3 || size[2] != s || size[3] != s {
            return Err(Error::Contract(format!("expected images [N, 3, {s}, {s}], got {size:?}")));
        }
        Ok(IdentityEncoding(self.encoder.forward(x, update)))
    }

    /// Every variable of every collection, prefixed with the collection name.
    pub fn named_variables(&self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for (prefix, store) in self.stores() {
            for (name, t) in store.variables() {
                out.insert(format!("{prefix}/{name}"), t);
            }
        }
        out
    }

    pub(crate) fn stores(&self) -> [(&'static str, &nn::VarStore); 5] {
        [
            ("encoder", &self.encoder.store),
            ("estimator", &self.estimator.store),
            ("pat", &self.pat.store),
            ("generator", &self.generator.store),
            ("discriminator", &self.discriminator.store),
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.encoder.all_finite()
            && self.estimator.all_finite()
            && self.pat.all_finite()
            && self.generator.all_finite()
            && self.discriminator.all_finite()
    }

    /// Parameter-frozen copies of `E` and `C` for the fake-age pathway.
    pub fn frozen_age_models(&self) -> Result<FrozenAgeModels> {
        let mut frozen = FrozenAgeModels {
            encoder: build_encoder(&self.profile, 0)?,
            estimator: build_estimator_head(&self.profile, 0)?,
        };
        frozen.encoder.store.set_kind(self.kind());
        frozen.estimator.store.set_kind(self.kind());
        frozen.encoder.store.freeze();
        frozen.estimator.store.freeze();
        frozen.sync(self)?;
        Ok(frozen)
    }
}

fn named_trainable(prefix: &str, store: &nn::VarStore) -> Vec<(String, Tensor)> {
    let mut vars: Vec<(String, Tensor)> = store
        .variables()
        .into_iter()
        .filter(|(_, t)| t.requires_grad())
        .map(|(name, t)| (format!("{prefix}/{name}"), t))
        .collect();
    vars.sort_by(|a, b| a.0.cmp(&b.0));
    vars
}

/// Frozen `Ê`, `Ĉ`: parameter copies that never receive gradients while
/// still passing gradients through their activations.
#[derive(Debug)]
pub struct FrozenAgeModels {
    pub encoder: Collection<Encoder>,
    pub estimator: Collection<EstimatorHead>,
}

impl FrozenAgeModels {
    /// Refreshes the copies from the live networks.
    pub fn sync(&mut self, live: &ModelBundle) -> Result<()> {
        self.encoder.copy_from(&live.encoder)?;
        self.estimator.copy_from(&live.estimator)?;
        Ok(())
    }

    pub fn is_frozen(&self) -> bool {
        self.encoder.is_frozen() && self.estimator.is_frozen()
    }

    /// Variables of both copies, for gradient inspection.
    pub fn variables(&self) -> Vec<Tensor> {
        let mut v: Vec<Tensor> = self.encoder.store.variables().into_values().collect();
        v.extend(self.estimator.store.variables().into_values());
        v
    }
}
