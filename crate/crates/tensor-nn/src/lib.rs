//! Minimal tensor and neural-network engine.
//!
//! Only the layer kinds needed by a compact per-tile error predictor are
//! provided: grouped 3x3 convolution, batch normalization, ReLU, max pooling
//! and sigmoid, each with an analytic backward pass. Everything is generic
//! over [`Real`] so the same code runs in `f32` for training and inference and
//! in `f64` for gradient checking.

pub mod activation;
pub mod batchnorm;
pub mod conv;
mod error;
pub mod optim;
pub mod pool;
pub mod pten;
mod real;
pub mod sequential;
mod tensor;
pub mod weights;

pub use activation::Activation;
pub use batchnorm::{BatchNormLayer, BnMode};
pub use conv::ConvLayer;
pub use error::{NnError, Result};
pub use optim::{OptimizerState, RmsProp};
pub use pool::MaxPool;
pub use real::Real;
pub use sequential::{Gradients, Layer, LayerGrad, Sequential, Tape};
pub use tensor::TensorBuffer;
