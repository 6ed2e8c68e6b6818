use thiserror::Error;

use crate::solvers::SolveStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty-action-space")]
    EmptyActionSpace,
    #[error("infeasible-action: {0}")]
    InfeasibleAction(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid context: {0}")]
    InvalidContext(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("incenter-unsupported-oracle")]
    IncenterUnsupportedOracle,
    #[error("low-data-regime: T={t} < 2(d + ln(1/beta)) = {required}")]
    LowDataRegime { t: usize, required: f64 },
    #[error("solver returned status {0:?}")]
    Solver(SolveStatus),
    /// The most violated row of a Polyak step has a zero feature difference.
    #[error("zero subgradient at demonstration {demo}")]
    ZeroSubgradient { demo: usize },
}
