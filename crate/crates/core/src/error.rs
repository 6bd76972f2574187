use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on arguments or configuration was violated.
    #[error("validation: {0}")]
    Validation(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file on disk does not match its declared layout.
    #[error("format error in {path}{}: {msg}", block_id.map(|b| format!(" (block {b})")).unwrap_or_default())]
    Format {
        path: PathBuf,
        block_id: Option<u32>,
        msg: String,
    },

    /// Input data is unusable (NaN coordinates, non-finite values, ...).
    #[error("data: {0}")]
    Data(String),

    /// Source points do not cover the region being interpolated.
    #[error("coverage: {0}")]
    Coverage(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, block_id: Option<u32>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            block_id,
            msg: msg.into(),
        }
    }

    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Data(_) => "data",
            Error::Coverage(_) => "coverage",
            Error::Dimension(_) => "dimension",
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;
