use thiserror::Error;

use crate::series::SeriesError;

/// Errors raised by the geometric and combinatorial layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("invalid model parameters: {0}")]
    InvalidModel(String),
    #[error("evaluation at Y = 0")]
    PoleAtOrigin,
    #[error("critical points are not separated (min distance {0:e})")]
    DegenerateCritical(f64),
    #[error("numerical failure: {0}")]
    NumericFailure(String),
    #[error("unstable moduli (g = {g}, n = {n})")]
    Unstable { g: u32, n: usize },
    #[error("chart too large: dW/dzeta vanishes at |zeta| = {0:e}")]
    ChartTooLarge(f64),
    #[error("decomposition residual {0:e} exceeds tolerance")]
    DecompositionFailure(f64),
    #[error("normalization is singular at z^0")]
    NonconvergentNormalization,
    #[error("equivariant weight vanishes at fixed point {0}")]
    UndefinedLimit(usize),
    #[error("finite-difference step halving disagreed (ratio {0})")]
    StepFailure(f64),
    #[error("coordinates are not flat (metric drift {0:e})")]
    NonFlatCoordinates(f64),
    #[error("ambiguity matrix has inadmissible shape: {0}")]
    AmbiguityShapeError(String),
    #[error("integration tail bound {0:e} not achieved")]
    TailError(f64),
    #[error("asymptotic match failed: {0}")]
    MatchFailure(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
