use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid size profile, training config or command options.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition (shape mismatch, unfrozen
    /// models passed where frozen copies are required, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Input data failed validation (non-normalized distribution, out-of-range
    /// age, malformed groups, ...).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("index {index} out of range for length {len}")]
    Index { index: i64, len: i64 },

    #[error("{path}:{line}: {msg}")]
    Manifest { path: PathBuf, line: usize, msg: String },

    #[error("could not decode image {path}: {msg}")]
    Decode { path: PathBuf, msg: String },

    #[error("non-finite loss at step {step}: {report}")]
    NonFinite { step: u64, report: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Torch(#[from] tch::TchError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// `true` for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Validation(_) | Error::Index { .. } | Error::Manifest { .. } | Error::Decode { .. }
        )
    }
}
