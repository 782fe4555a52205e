use thiserror::Error;

#[derive(Debug, Error)]
pub enum OuError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("drift is not stable: minimum real part of spectrum is {min_real_part:e}")]
    Unstable { min_real_part: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("ill-conditioned covariance: condition estimate {condition:e} exceeds {limit:e}")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("drift generation failed: {0}")]
    Generation(String),

    #[error("ingestion failed: {0}")]
    Ingestion(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, OuError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(OuError::InvalidArgument(msg.into()))
}
