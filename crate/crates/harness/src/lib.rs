//! Evaluation, reporting and end-to-end orchestration for the tile error
//! predictor, plus the `vrsnet` command-line tool.

pub mod demo;
mod error;
pub mod eval;
pub mod heatmap;
pub mod pipeline;
pub mod stats;

pub use error::{Error, Result};
