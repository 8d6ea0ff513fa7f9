use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value produced by {0}")]
    NonFiniteValue(String),
    #[error("invalid architecture spec: {0}")]
    InvalidSpec(String),
    #[error("architecture mismatch: file holds {found}, expected {expected}")]
    ArchMismatch { expected: String, found: String },
    #[error("corrupt weight file: {0}")]
    CorruptFile(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
