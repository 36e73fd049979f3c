use std::path::PathBuf;

use thiserror::Error;

use cryptovar_core::EpochMillis;

#[derive(Debug, Error)]
pub enum TickError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("recovery log write failed; batch rejected: {0}")]
    LogRejected(#[source] std::io::Error),
    #[error("line {line}: {message}")]
    Codec { line: usize, message: String },
    #[error("corrupt recovery log at line {line}: {message}")]
    CorruptLog { line: usize, message: String },
    #[error("date {date} has not fully elapsed (clock at {clock})")]
    NotElapsed { date: String, clock: EpochMillis },
    #[error("partition {0}: {1}")]
    Partition(String, String),
}

impl TickError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TickError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, TickError>;
