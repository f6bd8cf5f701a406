use thiserror::Error;

/// Errors produced by model construction, propagation and fitting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("label {label} out of range for mode {mode} (dimension {dim})")]
    LabelOutOfRange { mode: usize, label: usize, dim: usize },

    #[error("expected {expected} labels, got {found}")]
    LabelCount { expected: usize, found: usize },

    #[error("basis index {index} out of range for total dimension {total}")]
    IndexOutOfRange { index: usize, total: usize },

    #[error("mode index {mode} out of range for a layout with {modes} modes")]
    ModeOutOfRange { mode: usize, modes: usize },

    #[error("mode dimension {0} is too small; need at least 2")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid frame index {0}; expected 1..=5")]
    InvalidFrame(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("matrix exponential failed (1-norm {norm:e}): {reason}")]
    Expm { norm: f64, reason: String },

    #[error("step size underflow at t = {t} us (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("ambiguous eigenstate assignment: {0}")]
    AmbiguousAssignment(String),

    #[error("fit did not converge after {iterations} iterations")]
    FitNonConvergence { iterations: usize },

    #[error("trace shows no decay")]
    NoDecay,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
