//! Continuous face aging with self-estimated residual age embeddings.
//!
//! An encoder maps a face to an identity encoding, an estimator head reads
//! an age distribution off that encoding, and the estimator's weight rows
//! double as per-age basis vectors. A personalized age embedding built from
//! those rows modulates the encoding, and a generator decodes the result at
//! the requested target age.
pub mod age_embedding;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod losses;
pub mod networks;
pub mod training;

pub use error::{Error, Result};
