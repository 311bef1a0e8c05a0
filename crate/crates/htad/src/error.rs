//! Crate-wide error type.

/// Errors surfaced by graph construction, numerics, training and IO.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown patient `{0}`")]
    UnknownPatient(String),

    #[error("record type `{0}` is not in the declared type set")]
    UndeclaredType(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no path instance exists for metapath `{0}`")]
    NoPathInstance(String),

    #[error("empty sampling support: {0}")]
    EmptySupport(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
