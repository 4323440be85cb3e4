use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Variants split into two families: input problems (bad files, bad
/// arguments, schema violations) and numerical problems (degenerate data,
/// failed fits). [`Error::is_numerical`] tells them apart so front ends can
/// pick an exit status.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{file}: row {row}, column `{column}`: {message}")]
    Cell {
        file: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{file}: {message}")]
    Schema { file: PathBuf, message: String },

    #[error("{file}: {source}")]
    Io {
        file: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}: {message}")]
    Json { file: PathBuf, message: String },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("model fit failed: {0}")]
    Fit(String),
}

impl Error {
    /// True for failures caused by the numbers themselves rather than by
    /// malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Domain(_) | Error::Degenerate(_) | Error::Fit(_))
    }

    pub(crate) fn io(file: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            file: file.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
