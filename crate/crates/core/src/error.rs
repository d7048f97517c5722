use thiserror::Error;

/// Failure modes shared by every numerical routine in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("jump probabilities sum to {sum}, not 1")]
    NotAProbability { sum: f64 },
    #[error("kernel is not symmetric: site {site:?} has no matching reflection")]
    NotSymmetric { site: Vec<i32> },
    #[error("kernel support does not generate the full lattice")]
    NotIrreducible,
    #[error("bad dimension: {0}")]
    BadDimension(String),
    #[error("time {requested} exceeds the table horizon {horizon}")]
    HorizonExceeded { requested: f64, horizon: f64 },
    #[error("walk in dimension {dim} is recurrent; the Green function diverges")]
    RecurrentWalk { dim: usize },
    #[error("tail error estimate {estimate:.3e} exceeds tolerance {tol:.3e} after {terms} terms")]
    TailBoundFailed { estimate: f64, tol: f64, terms: usize },
    #[error("lattice box too small: {0}")]
    BoxTooSmall(String),
    #[error("time {s} lies outside the path horizon {horizon}")]
    OutOfHorizon { s: f64, horizon: f64 },
    #[error("grid too coarse: halving the step changed the result by {change:.3e} (relative)")]
    GridTooCoarse { change: f64 },
    #[error("unsupported tail index alpha = {alpha}")]
    UnsupportedAlpha { alpha: f64 },
    #[error("rejection envelope violated: acceptance probability {prob}")]
    EnvelopeViolated { prob: f64 },
    #[error("free energy not converged: doubling changed the estimate by {change:.3e}, allowed {allowed:.3e}")]
    NotConverged { change: f64, allowed: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
