use thiserror::Error;

use crate::index::IndexSet;

/// A candidate active set that came close to satisfying the KKT conditions.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct NearMiss {
    pub index_set: IndexSet,
    /// Largest KKT violation (0 would be a pass).
    pub violation: f64,
}

#[derive(Debug, Error)]
pub enum BrmError {
    #[error("invalid covariance model: {0}")]
    InvalidCovariance(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("threshold vector has no strictly positive component")]
    AllNonpositive,

    #[error("no candidate index set passes the KKT conditions (best near misses: {near_misses:?})")]
    Degenerate { near_misses: Vec<NearMiss> },

    #[error("subset {subset} orthant probability {value:e} is not distinguishable from 0 (stderr {stderr:e})")]
    IllConditionedK {
        subset: IndexSet,
        value: f64,
        stderr: f64,
    },

    #[error("rate function has no minimizer: {0}")]
    NoMinimizer(String),

    #[error("infinite-horizon sign condition violated: {0}")]
    SignCondition(String),

    #[error("Pickands integral truncation did not converge up to lambda = {last_lambda} (estimates {estimates:?})")]
    TruncationNotConverged {
        last_lambda: f64,
        estimates: Vec<(f64, f64, f64)>,
    },

    #[error("only {hits} conditional samples collected, need at least {needed}; lower u or raise n_rep")]
    InsufficientHits { hits: usize, needed: usize },
}

impl BrmError {
    /// True for failures of the numerics on otherwise valid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            BrmError::Degenerate { .. }
                | BrmError::IllConditionedK { .. }
                | BrmError::NoMinimizer(_)
                | BrmError::TruncationNotConverged { .. }
                | BrmError::InsufficientHits { .. }
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BrmError::InvalidCovariance(_) => "InvalidCovariance",
            BrmError::DimensionMismatch(_) => "DimensionMismatch",
            BrmError::InvalidInput(_) => "InvalidInput",
            BrmError::Precondition(_) => "Precondition",
            BrmError::Unsupported(_) => "Unsupported",
            BrmError::AllNonpositive => "AllNonpositive",
            BrmError::Degenerate { .. } => "Degenerate",
            BrmError::IllConditionedK { .. } => "IllConditionedK",
            BrmError::NoMinimizer(_) => "NoMinimizer",
            BrmError::SignCondition(_) => "SignCondition",
            BrmError::TruncationNotConverged { .. } => "TruncationNotConverged",
            BrmError::InsufficientHits { .. } => "InsufficientHits",
        }
    }
}

pub type Result<T> = std::result::Result<T, BrmError>;
