use thiserror::Error;

use crate::model::ValidationError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },
    #[error("input matrix is zero")]
    ZeroInput,
    #[error("lower-right Schur block is not positive definite (min eigenvalue {min_eig:e})")]
    M22NotPd { min_eig: f64 },
    #[error("matrix has numerical rank {rank}, expected at most one")]
    RankTooHigh { rank: usize },
    #[error("Riccati residual {residual:e} exceeds tolerance {tol:e}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error("trajectories are sampled on different grids")]
    GridMismatch,
    #[error("trajectory {label} does not cover node {node}")]
    IncompleteTrajectory { label: String, node: usize },
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("Riccati solution escaped at t = {escape_time} although the problem hypotheses exclude escape")]
    EscapeUnexpected { escape_time: f64 },
    #[error("bisection could not bracket the induced norm: the test passes at gamma = {gamma:e}")]
    BracketFailure { gamma: f64 },
    #[error("D + D^T is not positive definite (min eigenvalue {min_eig:e})")]
    DNotStrictlyPassive { min_eig: f64 },
    #[error("analyzer {analyzer} cannot handle a {found} problem")]
    WrongVariant {
        analyzer: &'static str,
        found: &'static str,
    },
}

pub(crate) fn dim_mismatch(
    context: &'static str,
    expected: impl ToString,
    found: impl ToString,
) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
