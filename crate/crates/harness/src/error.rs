use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("dimension mismatch: {0}")]
    Dims(String),
    #[error("metric mismatch: model predicts {model}, dataset holds {dataset}")]
    MetricMismatch { model: String, dataset: String },
    #[error("evaluation data overlaps the training set: {0}")]
    Overlap(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] vrsnet_core::Error),
    #[error(transparent)]
    Nn(#[from] tensor_nn::NnError),
    #[error(transparent)]
    Scene(#[from] synthscene::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
