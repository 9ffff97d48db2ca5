use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
///
/// Infeasibility is reported through [`Error::Infeasible`] so algorithm callers
/// can tell an infeasible network realization apart from a solver breakdown.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("index {index} out of range for {what} of length {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("infeasible: {0}")]
    Infeasible(Infeasibility),

    #[error("solver failed to converge after {iterations} iterations ({context})")]
    NumericalFailure {
        context: &'static str,
        iterations: usize,
    },

    #[error("exhaustive search over {num_bs} base stations exceeds the cap of {cap}")]
    OracleTooLarge { num_bs: usize, cap: usize },

    #[error("trace needs at least {needed} feasible entries, found {found}")]
    TraceTooShort { needed: usize, found: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which part of the pipeline could not be satisfied.
#[derive(Debug, Clone, PartialEq)]
pub enum Infeasibility {
    /// The access-link SINR targets cannot be met on the given BS set.
    Beamforming,
    /// The wireless backhaul cannot carry the required rates;
    /// `load` is the sum of `gamma / (1 + gamma)`, which must stay below one.
    Backhaul { load: f64 },
    /// No subset of base stations admits a feasible beamformer.
    NoFeasibleSubset,
}

impl std::fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Infeasibility::Beamforming => write!(f, "access-link SINR targets cannot be met"),
            Infeasibility::Backhaul { load } => {
                write!(f, "wireless backhaul overloaded (sum gamma/(1+gamma) = {load:.6})")
            }
            Infeasibility::NoFeasibleSubset => write!(f, "no feasible base-station subset"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
