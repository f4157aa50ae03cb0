use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("x = {x} is below the support of the marginal (minimum {min})")]
    BelowSupport { x: f64, min: f64 },

    #[error("probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("functional `{name}` rejected: {reason}")]
    Functional { name: String, reason: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("resource budget exceeded: {0}")]
    Budget(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable category used in CLI diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidModel(_) => "model",
            Error::InvalidConfig(_) | Error::ProbabilityOutOfRange(_) | Error::BelowSupport { .. } => {
                "config"
            }
            Error::Functional { .. } => "functional",
            Error::Unsupported(_) => "unsupported",
            Error::Parse(_) | Error::MissingColumn(_) | Error::Json(_) | Error::Csv(_) => "parse",
            Error::Budget(_) => "budget",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
