use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("data errors:\n{}", .0.join("\n"))]
    DataFiles(Vec<String>),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error for {path}: {message}")]
    Image { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable code, used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape(_) | Error::InvalidArgument(_) | Error::Config { .. } => "E_USAGE",
            Error::Data(_) | Error::DataFiles(_) | Error::Io { .. } | Error::Image { .. } => "E_DATA",
            Error::Checkpoint(_) => "E_CHECKPOINT",
            Error::Numeric(_) => "E_NUMERIC",
        }
    }
}

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(format!($($arg)*)) };
}
pub(crate) use shape_err;
