use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: parse error at line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate clustering: {0}; set an explicit match proportion instead")]
    DegenerateClustering(String),
    #[error("class starvation: {matching} matching and {unmatching} unmatching easy instances")]
    ClassStarvation { matching: usize, unmatching: usize },
    #[error("no evidence shares a feature with pair {0}")]
    NoEvidence(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class: 2 usage/config, 3 data integrity, 4 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Parse { .. } | Error::Integrity(_) => 3,
            Error::Io { .. } => 3,
            Error::Domain(_)
            | Error::DegenerateClustering(_)
            | Error::ClassStarvation { .. }
            | Error::NoEvidence(_)
            | Error::Numeric(_) => 4,
        }
    }
}
