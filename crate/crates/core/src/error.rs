use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("malformed frame: {0}")]
    Frame(String),

    #[error("peer aborted session (reason code {0:#04x})")]
    Aborted(u8),

    #[error("threshold unattainable: {0}")]
    ThresholdUnattainable(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("error correction failed: {0}")]
    CorrectionFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
