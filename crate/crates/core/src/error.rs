use std::path::PathBuf;

use thiserror::Error;

use crate::channel::BasisPair;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("observable was never sampled (selection probability {0})")]
    DegenerateSelection(f64),

    #[error("relative fluctuation bound undefined for a zero observation")]
    ZeroObservation,

    #[error("no vacuum pulses (vacuum probability {0})")]
    NoVacuumPulses(f64),

    #[error("decoy intensity {nu} must be strictly below signal intensity {mu}")]
    IntensityOrdering { mu: f64, nu: f64 },

    #[error("single-photon error rate undefined: yield lower bound is zero")]
    UndefinedErrorRate,

    #[error("value {0} is outside the binary entropy domain [0, 1]")]
    EntropyDomain(f64),

    #[error("missing single-photon error bound for basis pair {0}")]
    IncompleteBounds(BasisPair),

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error("protocol parameters are infeasible")]
    Infeasible,

    #[error("optimizer could not find a feasible starting point")]
    SearchFailure,

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("invalid value for `{key}`: {reason}")]
    Validation { key: String, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn validation(key: &str, reason: impl Into<String>) -> Self {
        Error::Validation {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user-supplied configuration rather than by
    /// the numerical pipeline.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Validation { .. } | Error::InvalidArgument { .. }
        )
    }
}
