use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `a` must be > 0, got {0}")]
    NonPositiveA(f64),
    #[error("parameter `sigma` must be > 0, got {0}")]
    NonPositiveSigma(f64),
    #[error("parameter `x0` must be >= 0, got {0}")]
    NegativeX0(f64),
    #[error("parameter `{0}` is not finite")]
    NonFiniteParam(&'static str),
    #[error("invalid time grid: {0}")]
    InvalidGrid(&'static str),
    #[error("estimator requires a uniform time grid")]
    NonUniformGrid,
    #[error("path length mismatch: {0}")]
    LengthMismatch(&'static str),
    #[error("negative state {value} at node {index}")]
    NegativeValue { index: usize, value: f64 },
    #[error("state is not finite")]
    NonFiniteState,
    #[error("noncentrality {0} exceeds the supported range (1e8)")]
    NoncentralityTooLarge(f64),
    #[error("invalid defect delta = {0}")]
    InvalidDelta(f64),
    #[error("deltas must be strictly increasing")]
    DeltasNotIncreasing,
    #[error("ladder must be positive and strictly decreasing")]
    LadderNotDecreasing,
    #[error("quadrature did not reach tolerance within budget")]
    QuadratureFailure,
    #[error("inverse scale function could not bracket the root")]
    BracketFailure,
    #[error("domain error: {0}")]
    DomainError(&'static str),
    #[error("empty path")]
    EmptyPath,
    #[error("bins do not cover the path range")]
    BinCoverage,
    #[error("paths are not on the same grid")]
    GridMismatch,
    #[error("boundary extrapolation of the normalized local time is degenerate")]
    ExtrapolationFailure,
    #[error("noncentral chi-square mixture could not reach 1e-10 accuracy")]
    CdfAccuracy,
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}
