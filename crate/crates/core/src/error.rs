use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation `{op}` is not supported for {what}")]
    Unsupported { op: &'static str, what: String },

    #[error("sample too small: need at least {needed}, got {got}")]
    SampleTooSmall { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dither {0:?} lies outside the basic lattice cell")]
    DitherOutsideCell(Vec<f64>),

    #[error("cell [{lo}, {hi}) has zero probability under the source")]
    ZeroProbabilityCell { lo: f64, hi: f64 },

    #[error("conditioning density integral {0:e} is too small")]
    DegenerateConditioning(f64),

    #[error("distortion {requested} is below the minimum achievable {minimum}")]
    InfeasibleDistortion { requested: f64, minimum: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("quadrature did not reach tolerance {tolerance:e} (estimate {estimate:e})")]
    Quadrature { tolerance: f64, estimate: f64 },

    #[error("corrupt or truncated code stream: {0}")]
    CorruptStream(String),

    #[error("I/O failure: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
