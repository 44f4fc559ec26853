use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the annealing toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("graph generation failed after {attempts} pairing attempts")]
    GenerationFailed { attempts: usize },

    #[error("eigensolver did not converge after {iterations} restarts (worst residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("degenerate ground state at s = {s} (gap {gap:.3e})")]
    DegenerateGroundState { s: f64, gap: f64 },

    #[error("at s = {s}: {source}")]
    AtSchedule {
        s: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("time evolution failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("state is not normalized (norm {norm})")]
    Unnormalized { norm: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical routines (as opposed to bad input or IO).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::AtSchedule { .. }
                | Error::DegenerateGroundState { .. }
                | Error::Integration { .. }
                | Error::Unnormalized { .. }
                | Error::GenerationFailed { .. }
        )
    }

    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::AtSchedule { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
