use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Caller broke a precondition (length mismatch, unsorted grid, bad parameter).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value at step {step}: {what}")]
    NumericDomain { step: usize, what: String },

    #[error("variation unbounded: {0}")]
    VariationUnbounded(String),

    #[error("resolution: {0}")]
    Resolution(String),

    #[error("representation unavailable: {0}")]
    RepresentationUnavailable(&'static str),

    #[error("inversion failed at t={t}, y={y}: {reason}")]
    Inversion { t: f64, y: f64, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn numeric(step: usize, what: impl Into<String>) -> Self {
        Error::NumericDomain {
            step,
            what: what.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
