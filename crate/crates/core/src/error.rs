use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum GspError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    /// A case or series violates one of its structural invariants.
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-diagonalizable within tolerance: eigenvector {index} has |u^T u| = {norm:.3e}")]
    NonDiagonalizable { index: usize, norm: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("ill-conditioned selection: sigma_min = {sigma_min:.3e}")]
    IllConditioned { sigma_min: f64 },

    #[error("no unobservable attack exists for the chosen compromised set")]
    NoUnobservableAttack,

    #[error("solver did not converge after {iterations} iterations (primal {primal:.3e}, dual {dual:.3e})")]
    NotConverged {
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("stream error at frame {frame}: {message}")]
    Stream { frame: usize, message: String },

    #[error("{0}")]
    Usage(String),
}

impl GspError {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        GspError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GspError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, GspError>;
