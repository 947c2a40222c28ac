//! Single-file checkpoints (safetensors container).
//!
//! Layout: `<collection>/<variable>` for the five parameter collections,
//! `meta/*` for the profile, format version, step counter and the PAT shift
//! and residual-embedding flags,
//! and any caller-provided extra tensors (optimizer moments) under their own
//! names.
use std::collections::BTreeMap;
use std::path::Path;

use tch::{Kind, Tensor};

use super::{ModelBundle, SizeProfile};
use crate::error::{Error, Result};

/// Bumped whenever the stored layout changes.
pub const CHECKPOINT_VERSION: i64 = 1;

const META_VERSION: &str = "meta/version";
const META_PROFILE: &str = "meta/profile";
const META_STEP: &str = "meta/step";
const META_BETA: &str = "meta/beta_enabled";
const META_RESIDUAL: &str = "meta/residual_enabled";

#[derive(Debug)]
pub struct Checkpoint {
    pub bundle: ModelBundle,
    /// Everything in the file that is neither a model variable nor metadata.
    pub extras: BTreeMap<String, Tensor>,
}

fn profile_tensor(p: &SizeProfile) -> Tensor {
    Tensor::from_slice(&[p.image_side, p.base_channels, p.encoding_side, p.encoding_channels, p.num_classes])
}

fn scalar_i64(t: &Tensor) -> i64 {
    t.int64_value(&[0])
}

pub fn save_checkpoint(path: impl AsRef<Path>, bundle: &ModelBundle, extras: &BTreeMap<String, Tensor>) -> Result<()> {
    let path = path.as_ref();
    let mut named: Vec<(String, Tensor)> = Vec::new();
    named.push((META_VERSION.into(), Tensor::from_slice(&[CHECKPOINT_VERSION])));
    named.push((META_PROFILE.into(), profile_tensor(&bundle.profile)));
    named.push((META_STEP.into(), Tensor::from_slice(&[bundle.step as i64])));
    named.push((META_BETA.into(), Tensor::from_slice(&[bundle.beta_enabled() as i64])));
    named.push((META_RESIDUAL.into(), Tensor::from_slice(&[bundle.residual_enabled as i64])));
    for (name, t) in bundle.named_variables() {
        named.push((name, t.detach().to_kind(Kind::Float).contiguous()));
    }
    for (name, t) in extras {
        if name.starts_with("meta/") || named.iter().any(|(n, _)| n == name) {
            return Err(Error::Contract(format!("extra tensor name '{name}' collides with model state")));
        }
        named.push((name.clone(), t.detach().contiguous()));
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    Tensor::write_safetensors(&named, path)?;
    Ok(())
}

/// Loads a checkpoint. When `expected` is given, a different stored profile
/// is an error.
pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<&SizeProfile>) -> Result<Checkpoint> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found")));
    }
    let mut tensors: BTreeMap<String, Tensor> = Tensor::read_safetensors(path)?.into_iter().collect();
    let mut take = |name: &str| {
        tensors
            .remove(name)
            .ok_or_else(|| Error::Validation(format!("{}: missing '{name}'", path.display())))
    };
    let version = scalar_i64(&take(META_VERSION)?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Validation(format!(
            "{}: checkpoint format version {version}, expected {CHECKPOINT_VERSION}",
            path.display()
        )));
    }
    let p = Vec::<i64>::try_from(&take(META_PROFILE)?)?;
    if p.len() != 5 {
        return Err(Error::Validation(format!("{}: malformed profile record", path.display())));
    }
    let profile = SizeProfile {
        image_side: p[0],
        base_channels: p[1],
        encoding_side: p[2],
        encoding_channels: p[3],
        num_classes: p[4],
    };
    if let Some(expected) = expected {
        if *expected != profile {
            return Err(Error::Config(format!(
                "{}: checkpoint profile {profile:?} does not match requested {expected:?}",
                path.display()
            )));
        }
    }
    let step = scalar_i64(&take(META_STEP)?);
    let beta_enabled = scalar_i64(&take(META_BETA)?) != 0;

    let mut bundle = ModelBundle::new(profile, 0, beta_enabled)?;
    bundle.step = step as u64;
    bundle.residual_enabled = scalar_i64(&take(META_RESIDUAL)?) != 0;
    tch::no_grad(|| -> Result<()> {
        for (name, var) in bundle.named_variables() {
            let src = take(&name)?;
            if src.size() != var.size() {
                return Err(Error::Validation(format!(
                    "{}: '{name}' has shape {:?}, expected {:?}",
                    path.display(),
                    src.size(),
                    var.size()
                )));
            }
            let mut var = var;
            var.copy_(&src);
        }
        Ok(())
    })?;
    Ok(Checkpoint { bundle, extras: tensors })
}
