use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {found}")]
    Dimension {
        op: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("tree parse error at byte {pos}: {msg}")]
    Tree { pos: usize, msg: String },

    #[error("invalid span {start}:{end} for sequence of length {len}")]
    InvalidSpan { start: usize, end: usize, len: usize },

    #[error("invalid label {label} for a task with {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    #[error("model file version error: {0}")]
    ModelVersion(String),

    #[error("model file shape error: {0}")]
    ModelShape(String),

    #[error("model file truncated: {0}")]
    ModelTruncated(String),

    #[error("{method} {reason}")]
    MethodMismatch { method: String, reason: String },

    #[error("exhaustive enumeration needs {needed} assignments (cap {cap}); use Monte-Carlo sampling instead")]
    EnumerationCap { needed: f64, cap: usize },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(&'static str),

    #[error("training failed: {0}")]
    Training(String),

    #[error("while scoring span {start}:{end}: {source}")]
    Node {
        start: usize,
        end: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
