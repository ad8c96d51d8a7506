use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("level order: target level {target} is finer than source level {source_level}")]
    LevelOrder { source_level: usize, target: usize },

    #[error("invalid hierarchy: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Hierarchy(Vec<crate::hierarchy::Violation>),

    #[error("allocation error: {0}")]
    Allocation(String),

    #[error("tuple error: {0}")]
    Tuple(String),

    #[error("tuple parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("divergence at epoch {epoch}, iteration {iteration}, level {level}: loss is {value}")]
    Divergence {
        epoch: usize,
        iteration: usize,
        level: usize,
        value: f64,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } => 3,
            Error::Io { .. } => 4,
            _ => 2,
        }
    }
}
