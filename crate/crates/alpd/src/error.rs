//! Crate-wide error type.
//!
//! Variants are grouped by the process exit code they map to in the CLI:
//! configuration problems (exit 2), data/serialization problems (exit 3),
//! diverged training (exit 4) and failed verification (exit 5).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    // --- configuration (exit 2) ---
    #[error("config error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    // --- data / io (exit 3) ---
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Format(String),

    // --- training (exit 4) ---
    #[error("training diverged: {0}")]
    Diverged(String),

    // --- verification (exit 5) ---
    #[error("verification failed: {0}")]
    Verification(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::ShapeMismatch(_) => 2,
            Error::Io { .. } | Error::Format(_) => 3,
            Error::Diverged(_) => 4,
            Error::Verification(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
