use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "step size {eta} too large at state {state}, action {action}: 1 + eta*advantage = {value}; largest admissible step is {max_eta}"
    )]
    StepTooLarge {
        state: usize,
        action: usize,
        eta: f64,
        value: f64,
        max_eta: f64,
    },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("singular linear system (pivot {pivot} at column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("cannot sample from an empty replay buffer")]
    EmptyBuffer,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate fit window: {0}")]
    DegenerateWindow(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
