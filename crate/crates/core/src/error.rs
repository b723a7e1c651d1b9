use thiserror::Error;

use crate::solver::SolveStatus;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Schur complement of the active Jacobian is singular ({rows} active rows)")]
    SchurSingular { rows: usize },

    #[error("forward solve did not converge: {0:?}")]
    SolveFailed(SolveStatus),

    #[error("knapsack capacity {capacity} exceeds the dynamic-programming table limit {limit}")]
    CapacityOverflow { capacity: usize, limit: usize },

    #[error("requested split sizes ({requested}) exceed available samples ({available})")]
    SizesExceedData { requested: usize, available: usize },

    #[error("normalized regret denominator is zero")]
    ZeroDenominator,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
