//! Manifests, image decoding, and the synthetic face dataset with its
//! analytic age and identity oracles.
mod dataset;
mod image;
mod manifest;
mod oracle;
mod synth;

pub use dataset::{
    build_synthetic_dataset, dataset_digest, identity_seed, test_identity_count, Dataset, SyntheticDataset,
};
pub use image::{from_byte, load_image_file, save_rgb_png, stack_images, to_byte, unstack_images, Image};
pub use manifest::{load_manifest, resolve_entry_path, write_manifest, ManifestEntry, Split, MANIFEST_HEADER};
pub use oracle::{
    age_features, detect_markers, oracle_age_readout, oracle_identity_distance, rgb_hue, AgeFeatures, AgeReadout,
    DetectedMarker, IDENTITY_DISTANCE_SENTINEL,
};
pub use synth::{
    hue_color, identity_traits, synthesize_face, IdentityMarkers, IdentityTraits, SyntheticFaceSpec, MAX_AGE, MIN_AGE,
};

use std::path::Path;

use crate::error::Result;
use crate::networks::SizeProfile;

/// Loads the image of one manifest entry at the profile's resolution.
pub fn load_image(manifest: &Path, entry: &ManifestEntry, profile: &SizeProfile) -> Result<Image> {
    load_image_file(resolve_entry_path(manifest, entry), profile.image_side as usize)
}
