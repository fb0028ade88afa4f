use std::io;

use thiserror::Error;

/// Errors raised by the network engine.
#[derive(Debug, Error)]
pub enum NnError {
    /// A layer or network was configured with incompatible shapes or parameters.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    Shape {
        context: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    /// Bad input data (labels out of range, empty batches, ...).
    #[error("data error: {0}")]
    Data(String),
    /// API misuse, e.g. calling backward without a recorded forward pass.
    #[error("usage error: {0}")]
    Usage(String),
    #[error("non-finite gradient in parameter {0}")]
    NonFinite(String),
}

impl NnError {
    pub(crate) fn shape(context: impl Into<String>, expected: &[usize], got: &[usize]) -> Self {
        NnError::Shape {
            context: context.into(),
            expected: expected.to_vec(),
            got: got.to_vec(),
        }
    }
}

/// Errors raised while reading or writing network checkpoints.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("unsupported checkpoint version: found {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error(
        "checkpoint shape mismatch for {name}: file has {found:?}, network expects {expected:?}"
    )]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error(transparent)]
    Network(#[from] NnError),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
