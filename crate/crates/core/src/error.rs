use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("numerical breakdown in learner {k} at t={t}: {detail}")]
    Numerical { k: usize, t: usize, detail: String },

    #[error("trajectory diverged at t={t} (|x| = {value:e})")]
    Divergence { t: usize, value: f64 },

    #[error("empty stream")]
    EmptyStream,

    #[error("csv {path}: row {row}: {message}")]
    Csv {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Broad category used by front ends to pick an exit status.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter { .. } | Error::Config(_) => ErrorKind::Config,
            Error::Io { .. } | Error::Csv { .. } => ErrorKind::Io,
            _ => ErrorKind::Runtime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Runtime,
    Io,
}
