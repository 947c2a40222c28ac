use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use tch::{Kind, Tensor};

use super::image::{load_image_file, stack_images, Image};
use super::manifest::{load_manifest, resolve_entry_path, write_manifest, ManifestEntry, Split};
use super::synth::{synthesize_face, SyntheticFaceSpec, MAX_AGE, MIN_AGE};
use crate::error::{Error, Result};
use crate::networks::SizeProfile;

/// Labelled images held in memory as one `[N, 3, S, S]` tensor.
#[derive(Debug)]
pub struct Dataset {
    pub images: Tensor,
    pub ages: Vec<i64>,
    /// Identity tag per image (the image file's parent directory name for
    /// manifest-backed data).
    pub identities: Vec<String>,
}

impl Dataset {
    pub fn new(images: Tensor, ages: Vec<i64>, identities: Vec<String>) -> Result<Self> {
        let n = images.size().first().copied().unwrap_or(0) as usize;
        if images.dim() != 4 || ages.len() != n || identities.len() != n {
            return Err(Error::Contract(format!(
                "{:?} images, {} ages, {} identities",
                images.size(),
                ages.len(),
                identities.len()
            )));
        }
        Ok(Self { images: images.to_kind(Kind::Float), ages, identities })
    }

    /// Loads every entry of `split` (all entries when `None`).
    pub fn load(manifest: impl AsRef<Path>, profile: &SizeProfile, split: Option<Split>) -> Result<Self> {
        let manifest = manifest.as_ref();
        let entries: Vec<ManifestEntry> =
            load_manifest(manifest)?.into_iter().filter(|e| split.is_none_or(|s| e.split == s)).collect();
        if entries.is_empty() {
            return Err(Error::Validation(format!("{}: no entries for the requested split", manifest.display())));
        }
        let mut images = Vec::with_capacity(entries.len());
        let mut identities = Vec::with_capacity(entries.len());
        for e in &entries {
            let path = resolve_entry_path(manifest, e);
            images.push(load_image_file(&path, profile.image_side as usize)?);
            identities.push(identity_tag(&e.path));
        }
        Self::new(stack_images(&images)?, entries.iter().map(|e| e.age).collect(), identities)
    }

    pub fn len(&self) -> usize {
        self.ages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ages.is_empty()
    }

    pub fn side(&self) -> i64 {
        self.images.size()[3]
    }

    /// Rows `indices` as an `[n, 3, S, S]` tensor.
    pub fn batch(&self, indices: &[usize]) -> Tensor {
        let idx: Vec<i64> = indices.iter().map(|&i| i as i64).collect();
        self.images.index_select(0, &Tensor::from_slice(&idx))
    }

    pub fn image(&self, i: usize) -> Result<Image> {
        Image::from_tensor(&self.images.get(i as i64))
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: self.batch(indices),
            ages: indices.iter().map(|&i| self.ages[i]).collect(),
            identities: indices.iter().map(|&i| self.identities[i].clone()).collect(),
        }
    }

    /// Smallest and largest label.
    pub fn age_range(&self) -> Option<(i64, i64)> {
        Some((*self.ages.iter().min()?, *self.ages.iter().max()?))
    }

    /// Distinct identity tags in first-seen order.
    pub fn identity_order(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.identities.iter().filter(|i| seen.insert(i.as_str())).cloned().collect()
    }
}

fn identity_tag(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Seed used to render identity `index` of a dataset built with `seed`.
pub fn identity_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Number of identities held out for the test split.
pub fn test_identity_count(n_identities: usize) -> usize {
    if n_identities < 2 {
        0
    } else {
        (n_identities / 10).max(1)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub root: PathBuf,
    pub manifest: PathBuf,
    pub entries: Vec<ManifestEntry>,
    /// Rendering seed of each identity, in directory order.
    pub identity_seeds: Vec<u64>,
}

/// Renders `n_identities × ages_per_identity` faces into
/// `<root>/<identity>/<age>.png` and writes `<root>/manifest.csv`.
///
/// Each identity gets distinct integer ages drawn uniformly from 15–70; the
/// last tenth of the identities (at least one when there are two or more)
/// form the test split.
pub fn build_synthetic_dataset(
    root: impl AsRef<Path>,
    n_identities: usize,
    ages_per_identity: usize,
    profile: &SizeProfile,
    seed: u64,
) -> Result<SyntheticDataset> {
    let root = root.as_ref();
    let span = (MAX_AGE - MIN_AGE) as usize + 1;
    if n_identities == 0 || ages_per_identity == 0 {
        return Err(Error::Validation("identity and per-identity counts must be at least 1".into()));
    }
    if ages_per_identity > span {
        return Err(Error::Validation(format!("at most {span} distinct ages per identity")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_test = test_identity_count(n_identities);
    let mut entries = Vec::with_capacity(n_identities * ages_per_identity);
    let mut identity_seeds = Vec::with_capacity(n_identities);
    for i in 0..n_identities {
        let id_seed = identity_seed(seed, i);
        identity_seeds.push(id_seed);
        let name = format!("id{i:04}");
        let dir = root.join(&name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let split = if i >= n_identities - n_test { Split::Test } else { Split::Train };
        for offset in sample(&mut rng, span, ages_per_identity).into_iter() {
            let age = MIN_AGE as i64 + offset as i64;
            let spec = SyntheticFaceSpec::new(id_seed, age as f64, profile.image_side as usize)?;
            let rel = PathBuf::from(&name).join(format!("{age}.png"));
            synthesize_face(&spec).save_png(root.join(&rel))?;
            entries.push(ManifestEntry { path: rel, age, gender: None, split });
        }
    }
    let manifest = root.join("manifest.csv");
    write_manifest(&manifest, &entries)?;
    Ok(SyntheticDataset { root: root.to_path_buf(), manifest, entries, identity_seeds })
}

/// SHA-256 over the manifest bytes and every listed file, in manifest order.
pub fn dataset_digest(manifest: impl AsRef<Path>) -> Result<String> {
    let manifest = manifest.as_ref();
    let mut h = Sha256::new();
    h.update(std::fs::read(manifest).map_err(|e| Error::io(manifest, e))?);
    for e in load_manifest(manifest)? {
        let p = resolve_entry_path(manifest, &e);
        h.update(std::fs::read(&p).map_err(|err| Error::io(&p, err))?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
