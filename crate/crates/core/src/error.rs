use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("degenerate density spec: {0}")]
    DegenerateSpec(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate estimate: all values are nonpositive")]
    DegenerateEstimate,

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("capacity exceeded: {nonzeros} nonzeros exceeds budget {budget}; use matrix-free storage")]
    Capacity { nonzeros: usize, budget: usize },

    #[error("invalid GCV value at lambda = {lambda}: trace {trace} >= rows {rows}")]
    InvalidGcv { lambda: f64, trace: f64, rows: usize },

    #[error("insufficient neighborhood: {found} points within radius {radius}")]
    InsufficientNeighborhood { found: usize, radius: f64 },

    #[error("degenerate patch: total variance is zero")]
    DegeneratePatch,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::DegenerateSpec(_) => "degenerate_spec",
            Error::DegenerateInput(_) => "degenerate_input",
            Error::DegenerateEstimate => "degenerate_estimate",
            Error::DivisionByZero(_) => "division_by_zero",
            Error::Capacity { .. } => "capacity",
            Error::InvalidGcv { .. } => "invalid_gcv",
            Error::InsufficientNeighborhood { .. } => "insufficient_neighborhood",
            Error::DegeneratePatch => "degenerate_patch",
            Error::Unsupported(_) => "unsupported",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Parse(_) => "parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validate(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Validation(msg()))
    }
}
