use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dims(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid value: {0}")]
    Value(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Nn(#[from] tensor_nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
}
