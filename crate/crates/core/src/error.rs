//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by dataset I/O, validation, training, and scoring.
#[derive(Debug, Error)]
pub enum Error {
    /// A line of a line-delimited JSON file failed to parse.
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Structurally valid input that violates a data invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Incompatible configuration options.
    #[error("configuration error: {0}")]
    Config(String),

    /// Remote scoring transport or protocol failure.
    #[error("scoring error: {0}")]
    Scoring(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than a failure at runtime.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Validation(_) | Error::Config(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
