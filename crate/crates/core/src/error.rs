use thiserror::Error;

/// Errors raised by the geometry, flow, branch-search, synthesis and PDE layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("parameter `{name}` = {value} outside allowed range {range}")]
    ParamOutOfRange {
        name: String,
        value: f64,
        range: String,
    },
    #[error("point outside chart: {0}")]
    OutsideChart(String),
    #[error("point outside chart overlap: {0}")]
    OutsideOverlap(String),
    #[error("phase state violates its chart invariant: {0}")]
    ChartInvariantViolated(String),
    #[error("integrator failure: {0}")]
    IntegratorFailure(String),
    #[error("path did not reach the boundary ({0})")]
    NotAtBoundary(String),
    #[error("geodesic is trapped (no boundary limit)")]
    Trapped,
    #[error("no branch found: {0}")]
    NoBranchFound(String),
    #[error("jacobian unstable: richardson disagreement {0:.3e}")]
    JacobianUnstable(f64),
    #[error("curvature unavailable: {0}")]
    CurvatureUnavailable(String),
    #[error("conjugate count unstable: {coarse} at step h, {fine} at step h/2")]
    CountUnstable { coarse: usize, fine: usize },
    #[error("degenerate branch refused: {0}")]
    DegenerateBranch(String),
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("CFL violation: ds = {ds:.3e} exceeds limit {limit:.3e}")]
    CflViolation { ds: f64, limit: f64 },
    #[error("unstable growth detected at s = {0}")]
    UnstableGrowth(f64),
    #[error("empty trace")]
    EmptyTrace,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
