use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (asymmetry {asymmetry:e})")]
    NotSkew { asymmetry: f64 },

    #[error("matrix has non-positive determinant {det:e}, cannot project onto SO(3)")]
    Degenerate { det: f64 },

    #[error("matrix is not a rotation (orthogonality error {orthogonality:e}, det {det})")]
    NotRotation { orthogonality: f64, det: f64 },

    #[error("gain matrix is not symmetric (asymmetry {asymmetry:e})")]
    AsymmetricGain { asymmetry: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("control law failed at step {step}: {source}")]
    ControlLawFailure {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("objective or constraint became non-finite during the OCP solve")]
    NonFiniteObjective,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid value at `{path}`: {reason}")]
    Validation { path: String, reason: String },

    #[error("trace grids differ: {0}")]
    GridMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn validation(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the scenario document rather than the run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::Validation { .. }
                | Error::InvalidParameter { .. }
                | Error::AsymmetricGain { .. }
                | Error::NotRotation { .. }
                | Error::Io { .. }
        )
    }
}
