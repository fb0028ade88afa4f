use std::io;
use std::path::PathBuf;

use rffp_nn::{CheckpointError, NnError};
use thiserror::Error;

/// Errors raised by the simulator, dataset, classifier, training and report layers.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A caller passed an argument outside the operation's domain.
    #[error("argument error: {0}")]
    Argument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed {what}: {message}")]
    Format { what: String, message: String },
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl CoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: impl Into<String>, message: impl ToString) -> Self {
        CoreError::Format {
            what: what.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
