//! Analytic scenes, a ray-traced deferred renderer with variable shading
//! rates, temporal reprojection and dataset capture.

pub mod camera;
pub mod capture;
mod error;
pub mod gbuffer;
pub mod reproject;
pub mod sampler;
pub mod scene;
pub mod shade;

pub use camera::Camera;
pub use capture::{capture_dataset, capture_datasets, load_dataset, CaptureConfig, CapturedSample, Dataset, Manifest};
pub use error::{Error, Result};
pub use gbuffer::{render_gbuffer, GBufferFrame};
pub use reproject::reproject;
pub use sampler::{sample_viewpoint_pair, SamplerConfig, ViewpointPair};
pub use scene::{scene_library, Scene, SceneKind, Vec3};
pub use shade::shade;
