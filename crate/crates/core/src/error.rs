use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("fields live on different grids ({0} vs {1})")]
    GridMismatch(String, String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("kernel support radius {radius} too large: 2r must stay below {limit}")]
    SupportTooLarge { radius: f64, limit: f64 },

    #[error("kernel support radius {radius} unresolved: needs at least {min} (3 cells)")]
    SupportUnresolved { radius: f64, min: f64 },

    #[error("invalid model parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },

    #[error("inadmissible initial data: {0}")]
    Inadmissible(String),

    #[error("degenerate probe: controls differ by {0:e} in L2")]
    DegenerateProbe(f64),

    #[error("epsilon ladder needs at least 3 rungs, got {0}")]
    LadderTooShort(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("projection characterization needs delta > 0")]
    DeltaZero,

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid value for {key}: {reason}")]
    Validation { key: String, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Re-tag a `NonFinite` error with the step at which it happened.
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            Error::NonFinite { what, .. } => Error::NonFinite { what, step },
            other => other,
        }
    }
}
