use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("label multisets differ")]
    LabelMismatch,

    #[error("size mismatch in {what}: {left} vs {right}")]
    SizeMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),

    #[error("constraint {index}: {message}")]
    InvalidConstraint { index: usize, message: String },

    #[error("unknown tensor `{0}`")]
    UnknownTensor(String),

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("weight blob truncated: manifest needs {expected} bytes, blob has {found}")]
    TruncatedBlob { expected: usize, found: usize },

    #[error("objective returned {value} at {point:?}")]
    NonFiniteObjective { value: f64, point: Vec<f64> },

    #[error("invalid options: {0}")]
    InvalidOptions(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
