use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not symmetric (largest asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("cannot normalize a zero or non-finite vector")]
    ZeroVector,

    #[error("grid needs {requested} amplitudes, cap is {cap}")]
    GridTooLarge { requested: u128, cap: usize },

    #[error("too few distinct predictor values for a fit: {found} (need at least {required})")]
    DegenerateFit { found: usize, required: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
