use thiserror::Error;

/// Errors raised across the reduction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("corrupt library file: {0}")]
    CorruptFile(String),

    #[error("incompatible library: {0}")]
    Incompatible(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::DimensionMismatch(format!(
            "{what}: length {got}, expected {expected}"
        )));
    }
    Ok(())
}
