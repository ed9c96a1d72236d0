use thiserror::Error;

/// Errors raised by operators, oracles and solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Dimensions or other structural preconditions do not agree.
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid box: lower bound {lower} exceeds upper bound {upper}")]
    InvalidBox { lower: f64, upper: f64 },
    #[error("operator is not positive definite (Rayleigh quotient {rayleigh:e})")]
    NotPositiveDefinite { rayleigh: f64 },
    #[error("unsupported metric: {0}")]
    UnsupportedMetric(String),
    /// A weight operator violates the configured bounds under the `enforce` policy.
    #[error("weight bounds violated at iteration {iteration}: {detail}")]
    WeightBounds { iteration: usize, detail: String },
    #[error("iteration diverged at iteration {iteration} (residual {residual:e})")]
    Divergence { iteration: usize, residual: f64 },
    /// The step-size certificate failed and was not waived.
    #[error("step-size certificate failed: {0}")]
    Certificate(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::ContractViolation(format!(
            "{what} has length {got}, expected {expected}"
        )))
    }
}
