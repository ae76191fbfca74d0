use thiserror::Error;

/// Errors raised by the orbit-pooling library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported method: {0}")]
    UnsupportedMethod(String),

    /// The input cannot be processed faithfully, e.g. an image whose support
    /// would be pushed across the grid boundary.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate basis: {0}")]
    DegenerateBasis(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
