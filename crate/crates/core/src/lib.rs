//! Per-tile visual error prediction for variable-rate shading.
//!
//! * [`transforms`] reparameterizes raw metric targets for training.
//! * [`metrics`] computes the reference error maps the network learns.
//! * [`network`] builds, trains and runs the five-layer predictor.
//! * [`vrs`] turns per-tile predictions into shading-rate decisions.

mod error;
pub mod imageio;
pub mod metrics;
pub mod network;
pub mod transforms;
pub mod vrs;

pub use error::{Error, Result};
pub use tensor_nn::TensorBuffer;
