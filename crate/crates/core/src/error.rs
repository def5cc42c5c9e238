use thiserror::Error;

/// Errors produced by the certification library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Tensor or map dimensions disagree.
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    /// Invalid parameters or missing configuration entries.
    #[error("configuration error: {0}")]
    Config(String),

    /// A Monte-Carlo sample failed during vote collection.
    #[error("sample {index} failed: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// Not enough images survive the confidence filter to build grids.
    #[error("insufficient images for grid construction: {0}")]
    InsufficientImages(String),

    /// Model file could not be decoded.
    #[error("invalid model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
