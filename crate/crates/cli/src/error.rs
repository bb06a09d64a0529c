use std::path::PathBuf;

use qkd_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input: unreadable config, unknown key, out-of-range value.
    #[error("invalid configuration: {0}")]
    Validation(String),

    /// A numeric procedure failed (no threshold, fit or calibration failure).
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io { .. } => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter { field, reason } => {
                CliError::Validation(format!("{}: {reason}", crate::config::config_key(field)))
            }
            CoreError::Domain(m) => CliError::Validation(m),
            CoreError::Io(e) => CliError::Io { path: PathBuf::new(), source: e },
            other => CliError::Numeric(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
