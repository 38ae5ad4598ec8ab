//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported size: {0}")]
    UnsupportedSize(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("clip too short: need {needed} frames, have {actual}")]
    ClipTooShort { needed: usize, actual: usize },

    #[error("bad magic in {path}")]
    BadMagic { path: String },

    #[error("unsupported format version {version} in {path}")]
    BadVersion { path: String, version: u32 },

    #[error("truncated or inconsistent file {path}: {reason}")]
    Truncated { path: String, reason: String },

    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier, used by the CLI for machine-readable errors.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::UnsupportedSize(_) => "unsupported-size",
            Error::DimensionMismatch(_) => "dimension-mismatch",
            Error::DegenerateInput(_) => "degenerate-input",
            Error::ClipTooShort { .. } => "clip-too-short",
            Error::BadMagic { .. } => "bad-magic",
            Error::BadVersion { .. } => "bad-version",
            Error::Truncated { .. } => "truncated",
            Error::Format { .. } => "format",
            Error::Divergence { .. } => "divergence",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
