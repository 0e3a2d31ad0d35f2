use std::path::PathBuf;

use thiserror::Error;

use crate::thinfilm::FilmState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid regime: {0}")]
    InvalidRegime(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("derivative order {0} outside 1..=6")]
    OrderOutOfRange(u32),

    #[error("node count mismatch: expected {expected}, got {got}")]
    NodeCountMismatch { expected: usize, got: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("positivity violated: min eta = {min_eta:e}")]
    PositivityViolation { min_eta: f64 },

    #[error("time stepping broke down at t = {t}: {reason}")]
    Breakdown {
        t: f64,
        reason: String,
        last_state: Box<FilmState>,
    },

    #[error("invalid film profile: {0}")]
    InvalidProfile(String),

    #[error("mode system assembly failed for wavenumber {mode:?}: {reason}")]
    Assembly { mode: [i64; 2], reason: String },

    #[error("degenerate rate fit: {0}")]
    DegenerateFit(String),

    #[error("energy audit failed at step {step}: {reason}")]
    AuditFailure { step: usize, reason: String },

    #[error("internal numerical error: {0}")]
    Internal(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown preset `{0}`")]
    NotFound(String),

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
    /// Failures of the numerics (as opposed to bad input or i/o).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::PositivityViolation { .. }
                | Error::Breakdown { .. }
                | Error::Assembly { .. }
                | Error::DegenerateFit(_)
                | Error::AuditFailure { .. }
                | Error::Internal(_)
        )
    }

    /// Errors caused by the configuration itself.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidRegime(_)
                | Error::InvalidParameter { .. }
                | Error::OrderOutOfRange(_)
                | Error::NodeCountMismatch { .. }
                | Error::GridMismatch(_)
                | Error::InvalidProfile(_)
                | Error::Config(_)
                | Error::NotFound(_)
                | Error::Json(_)
        )
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
