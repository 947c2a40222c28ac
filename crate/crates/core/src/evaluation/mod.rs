//! Aging-accuracy, image-quality and identity-preservation protocols.
mod ablation;
mod confusion;
mod fid;
mod groups;
mod identity;
mod interpolation;
mod montage;
mod report;

pub use ablation::{ablation_compare, evaluate_arm, AblationReport, ArmMetrics};
pub use confusion::{
    confusion_from_sweep, continuous_confusion_matrix, generate_sweep, AgeGrid, AgeReader, ConfusionMatrix,
    ConfusionMode, Sweep,
};
pub use fid::{feature_stats, fid, group_fid, GroupFid, image_stats, symmetric_sqrt, EncoderFeatures, FeatureExtractor, GaussianStats};
pub use groups::{group_target_age, mean_age_per_group, GroupAge, HalfOpenGroup, SYNTHETIC_DECADES};
pub use identity::{identity_preservation, IdentityPreservation};
pub use interpolation::identity_interpolation;
pub use montage::{image_grid, labeled_strip};
pub use report::{age_table, confusion_table, render_confusion_heatmap, write_json, write_text};
