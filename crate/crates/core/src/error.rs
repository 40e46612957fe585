use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CoresetError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoresetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}: {message}")]
    Format { file: String, message: String },

    /// An artifact invariant does not hold.
    #[error("{file}: field `{field}`: {message}")]
    Invalid {
        file: String,
        field: String,
        message: String,
    },

    #[error("missing required data: {0}")]
    Missing(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("budget {k} exceeds pool size {available}{}", .context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    Budget {
        k: usize,
        available: usize,
        context: Option<String>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CoresetError {
    pub(crate) fn invalid(
        file: impl Into<String>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Self::Invalid {
            file: file.into(),
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn format(file: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Format {
            file: file.into(),
            message: message.into(),
        }
    }

    pub(crate) fn arg(message: impl Into<String>) -> Self {
        Self::InvalidArgument(message.into())
    }
}
