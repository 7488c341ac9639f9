use thiserror::Error;

/// Errors surfaced by simulation, target construction, training and the
/// numerical oracles.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("non-finite state at step {step}{}", path.map(|p| format!(" (path {p})")).unwrap_or_default())]
    NonFinite { step: usize, path: Option<usize> },

    #[error("invalid model parameters: {0}")]
    InvalidModel(String),

    #[error("degenerate schedule: normaliser below 1e-12 at t = {t}")]
    DegenerateSchedule { t: f64 },

    #[error("singular matrix in {0}")]
    Singular(String),

    #[error("query ({t}, {x}) outside table range")]
    OutOfRange { t: f64, x: f64 },

    #[error("pde solver instability: value {value} at time step {step}")]
    SolverInstability { value: f64, step: usize },

    #[error("non-finite loss at path {path}, step {step}")]
    NonFiniteLoss { path: usize, step: usize },

    #[error("config parse error at line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
