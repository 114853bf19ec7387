use thiserror::Error;

/// Errors produced by the landscape toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QclError {
    #[error("control index {index} = {value} outside bounds [{lo}, {hi}]")]
    BoundsViolation {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("state not normalized: norm = {norm}")]
    Normalization { norm: f64 },

    #[error("integration failure: {0}; try a finer time grid")]
    Integration(String),

    #[error("point is not critical: gradient norm {grad_norm:e} exceeds {limit:e}")]
    NotCritical { grad_norm: f64, limit: f64 },

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("malformed document: {0}")]
    Parse(String),
}

impl QclError {
    /// True for errors caused by invalid physical or control input, as
    /// opposed to numerical breakdown or malformed arguments.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            QclError::Validation(_)
                | QclError::BoundsViolation { .. }
                | QclError::Normalization { .. }
                | QclError::Parse(_)
        )
    }

    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            QclError::Numeric(_) | QclError::Integration(_) | QclError::NotCritical { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, QclError>;
