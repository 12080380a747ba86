use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("range error at line {line}: {msg}")]
    Range { line: usize, msg: String },

    #[error("invalid value: {0}")]
    Value(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("count overflow: {0}")]
    Overflow(String),

    #[error("empty distribution: total weight is zero")]
    EmptyDistribution,

    #[error("draw {u} outside [0, {total})")]
    OutOfRange { u: f64, total: f64 },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("worker panicked while processing chunk {chunk}")]
    WorkerPanic { chunk: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
