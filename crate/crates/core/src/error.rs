use thiserror::Error;

/// Errors raised by the solver, the diagnostics and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid discretization: {0}")]
    InvalidGrid(String),

    #[error("non-finite sample {value} at r = {radius}")]
    NonFiniteSample { radius: f64, value: f64 },

    #[error("field lives on a different domain than the operator")]
    DomainMismatch,

    #[error("fields are sampled at different times ({0} vs {1})")]
    TimeMismatch(f64, f64),

    #[error("operation requires {expected} representation")]
    RepresentationMismatch { expected: &'static str },

    #[error("operation is only defined for radial fields (num_angular = 1)")]
    NotRadial,

    #[error("degenerate quotient 0/0 in {0}")]
    Degenerate(&'static str),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("exponent pair (q, r) = ({q}, {r}) is not admissible in dimension {n}")]
    Inadmissible { n: usize, q: f64, r: f64 },

    #[error("endpoint pair (q, r) = ({q}, {r}) is excluded")]
    Endpoint { q: f64, r: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("time {0} is outside the transform's range t >= 1")]
    TransformRange(f64),

    #[error("non-finite field value at step {step}")]
    NonFiniteField { step: usize },

    #[error("validity horizon exceeded at t = {time}: outer-shell mass fraction {fraction:e}")]
    HorizonViolation { time: f64, fraction: f64 },

    #[error("tridiagonal solve broke down at row {0}")]
    SolveBreakdown(usize),

    #[error("data fail the order-{order} compatibility condition: trace of h_{index} is {trace:e} (tolerance {tolerance:e})")]
    Incompatible {
        order: usize,
        index: usize,
        trace: f64,
        tolerance: f64,
    },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
