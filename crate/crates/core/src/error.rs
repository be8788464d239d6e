use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("label count mismatch: fixed has {fixed} labels, moving has {moving}")]
    LabelCountMismatch { fixed: usize, moving: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("loss became non-finite at level {level}, iteration {iteration}: {detail}")]
    NonFiniteLoss { level: usize, iteration: usize, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: missing header key `{key}`")]
    MissingKey { path: PathBuf, key: &'static str },

    #[error("{path}: payload holds {actual} bytes but header declares {expected}")]
    SizeMismatch { path: PathBuf, expected: usize, actual: usize },

    #[error("{path}: unsupported element type `{element_type}`")]
    UnsupportedElementType { path: PathBuf, element_type: String },

    #[error("{path}: big-endian payloads are not supported")]
    BigEndian { path: PathBuf },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::NonFiniteLoss { .. })
    }
}
