use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at position {position}: {reason}")]
    Parse { position: usize, reason: String },

    /// Bad input or configuration: caller-fixable.
    #[error("invalid input: {0}")]
    Validation(String),

    /// A formula evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{0}")]
    Runtime(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(position: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            position,
            reason: reason.into(),
        }
    }

    /// True for errors the user can fix by changing inputs.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Validation(_) | Error::Json(_) | Error::Domain(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
