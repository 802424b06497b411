use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error("degenerate camera: {0}")]
    Camera(String),
    #[error("dimension mismatch: {0}")]
    Dims(String),
    #[error("no valid viewpoint pair after {0} attempts")]
    SamplerExhausted(usize),
    #[error("malformed dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Core(#[from] vrsnet_core::Error),
    #[error(transparent)]
    Nn(#[from] tensor_nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
