use alloc::string::String;

use crate::numerics::SolveStatus;

/// Errors raised by the planning, dispatch and negotiation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("nonpositive cost coefficient {value} for customer {customer}")]
    NonPositiveCost { customer: usize, value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("policy violates capacity: worst-case residual in [{y_min}, {y_max}] exceeds kappa {kappa}")]
    InfeasiblePolicy { y_max: f64, y_min: f64, kappa: f64 },
    #[error("quadratic program not solved: {0:?}")]
    Solver(SolveStatus),
    #[error("matrix factorization failed")]
    Factorization,
    #[error("could not bracket root: marginal cost is not increasing")]
    Bracket,
    #[error("empty sample set")]
    EmptySamples,
    #[error("transport failure in round {round}: {reason}")]
    Transport { round: usize, reason: String },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
