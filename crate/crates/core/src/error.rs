use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violated a documented precondition or schema.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}, line {line}: {message}")]
    BadRecord {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("design matrix is rank deficient: column `{column}` is collinear with earlier columns")]
    RankDeficient { column: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Whether the error stems from bad input (as opposed to a runtime
    /// failure such as I/O).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation(_)
            | Error::MissingColumn { .. }
            | Error::BadRecord { .. }
            | Error::RankDeficient { .. } => true,
            Error::Csv { source, .. } => !matches!(source.kind(), csv::ErrorKind::Io(_)),
            Error::Stage { source, .. } => source.is_validation(),
            Error::Io { .. } | Error::Json(_) => false,
        }
    }
}

/// Failure reported by an external lookup provider. Never fatal to the
/// pipeline: callers log it and treat the lookup as a miss.
#[derive(Debug, Error)]
#[error("provider error: {0}")]
pub struct ProviderError(pub String);
