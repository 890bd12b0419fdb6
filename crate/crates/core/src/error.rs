use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("solver input error: {0}")]
    Input(String),
    /// The program has no feasible point at the requested penalty level.
    #[error("infeasible: {constraint} violated by {residual:.3e}")]
    Infeasible { constraint: String, residual: f64 },
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{context}: {source}")]
    Solver {
        context: String,
        #[source]
        source: SolverError,
    },
    #[error("degenerate denominator in {0}")]
    DegenerateDenominator(String),
    #[error("degrees-of-freedom adjustment undefined: support size {support} >= n = {n}")]
    DegreesOfFreedom { support: usize, n: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("tuning failed: {0}")]
    Tuning(String),
}

impl EstimatorError {
    pub fn solver(context: impl Into<String>, source: SolverError) -> Self {
        EstimatorError::Solver {
            context: context.into(),
            source,
        }
    }
}
