use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input rejected by a precondition check (non-finite score, bad range).
    #[error("validation error: {0}")]
    Validation(String),

    /// A lookup into profiles, windows, weights or normalization parameters
    /// found no entry.
    #[error("configuration error: {0}")]
    Config(String),

    /// Normalization parameters could not be fitted.
    #[error("fit error: {0}")]
    Fit(String),

    /// A line-oriented input (config file, score trace) failed to parse.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than the environment.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Config(_) | Error::Fit(_) | Error::Parse { .. }
        )
    }
}
