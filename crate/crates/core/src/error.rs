use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step size {h} exceeds cap {cap} at step {step}")]
    StepCapExceeded { h: f64, cap: f64, step: usize },

    #[error("iterates diverged (non-finite value) at step {step}")]
    Divergence { step: usize },

    #[error("pre-solve failed to reach gradient tolerance {tol:e} within {iters} iterations (final |g| = {achieved:e})")]
    PreSolveFailed { tol: f64, iters: usize, achieved: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("trace is missing data required by the verifier: {0}")]
    MissingTraceData(String),

    #[error("rate fit window contains a nonpositive mean at k = {k}")]
    NonPositiveMean { k: usize },

    #[error("CFL condition violated: h = {h} exceeds 2 a_E / L_E = {cap}")]
    CflViolation { h: f64, cap: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("failed to parse {what}: {detail}")]
    Parse { what: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
