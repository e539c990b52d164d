use thiserror::Error;

/// Errors surfaced by the library and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid-input: {0}")]
    InvalidInput(String),
    #[error("dimension-mismatch: {0}")]
    DimensionMismatch(String),
    #[error("model-format: {0}")]
    ModelFormat(String),
    #[error("dataset-format: {0}")]
    DatasetFormat(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
