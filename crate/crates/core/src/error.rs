//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed text input (CSV row, config line, PGM header).
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// Malformed binary or structural input (bad magic, truncation, gaps).
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    /// Configuration key with an out-of-range or unparseable value, or an
    /// unknown key.
    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    /// Programmatic misuse of an in-memory API (dimension mismatch, empty
    /// input, non-adjacent segments, ...).
    #[error("{0}")]
    InvalidInput(String),

    /// An actionness score was required for a patch that has none.
    #[error("missing actionness score for proposal {proposal_id} at frame {frame}")]
    MissingActionness { proposal_id: u32, frame: u32 },

    /// Iterative solver failed to reach its tolerance within the iteration
    /// budget. Carries the final objective/duality gap.
    #[error("solver did not converge: final gap {gap:.3e}")]
    NonConvergence { gap: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
