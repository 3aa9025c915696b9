use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("atom number must be at least 1")]
    ZeroAtoms,

    #[error("operation requires a {expected} basis, got a {found} basis")]
    WrongBasisKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("operands live on different collective bases")]
    BasisMismatch,

    #[error("invalid level label `{0}` (expected one of s, e, g)")]
    InvalidLevel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("step budget of {max_steps} exhausted at t = {t}")]
    StepBudgetExhausted { t: f64, max_steps: usize },

    #[error("non-finite value encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("wave-function norm underflow at t = {t}")]
    NormUnderflow { t: f64 },

    #[error("steady state did not converge (residual {residual:e})")]
    SteadyStateNotConverged { residual: f64 },

    #[error("product-space oracle supports at most {max} atoms, got {n}")]
    TooManyAtoms { n: usize, max: usize },

    #[error("time series is empty or too short")]
    EmptySeries,

    #[error("trajectory {index} failed: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
