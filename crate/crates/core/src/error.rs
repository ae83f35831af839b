//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`].  Variants carry enough
//! context (names, indices, file locations) that a CLI can print the message
//! verbatim and the user knows what to fix.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All errors produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A binning document or binning construction is invalid.
    #[error("invalid binning: {0}")]
    InvalidBinning(String),

    /// An event or vector does not match the dimensionality it is used with.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Two objects that must share a binning (or toy structure) do not.
    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    /// A numeric argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A text or JSON input does not conform to the expected file format.
    /// Carries the offending location (file, row, column) where known.
    #[error("format error: {0}")]
    Format(String),

    /// A truth-level expectation exceeds what the simulation sample can
    /// support, so the hypothesis cannot be tested with this matrix set.
    #[error("untestable hypothesis: {0}")]
    Untestable(String),

    /// An optimisation or sampling routine could not produce a result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Underlying I/O failure (file missing, unreadable, ...).
    ///
    /// The cause is part of the message rather than a `source()` link so
    /// that chain-printing reporters do not repeat it.
    #[error("i/o error: {path}: {cause}")]
    Io {
        path: String,
        cause: std::io::Error,
    },
}

impl Error {
    /// Attach a file path to a raw I/O error.
    pub fn io(path: impl Into<String>, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause,
        }
    }
}
