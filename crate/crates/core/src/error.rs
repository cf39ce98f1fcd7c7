use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ClimdError>;

#[derive(Debug, Error)]
pub enum ClimdError {
    /// Input violates a documented precondition or invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A record in an input file could not be parsed or failed validation.
    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// The requested per-epoch subset cannot be realized from the available samples.
    #[error("infeasible schedule: {0}")]
    Infeasible(String),

    /// A metric is undefined for the given confusion matrix.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A pipeline stage failed.
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<ClimdError>,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl ClimdError {
    pub fn validation(msg: impl Into<String>) -> Self {
        ClimdError::Validation(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        ClimdError::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code: 1 validation, 2 infeasible schedule, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClimdError::Validation(_) | ClimdError::Record { .. } | ClimdError::UndefinedMetric(_) => 1,
            ClimdError::Infeasible(_) => 2,
            ClimdError::Io { .. } => 3,
            ClimdError::Stage { source, .. } => source.exit_code(),
        }
    }
}
