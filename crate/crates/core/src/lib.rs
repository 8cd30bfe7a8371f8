//! Multi-cycle mutual-information constrained unpaired image translation.

pub mod backbone;
pub mod engine;
pub mod error;
pub mod image;
pub mod metrics;
pub mod mi;
mod nn;
pub mod synth;
pub mod trainer;

pub use backbone::{BackboneModule, IdentityBackbone, ToyConfig, ToyCycleGan};
pub use error::{McmiError, Result};
pub use image::{Direction, Domain, Geometry, ImageBatch, ValueRange};
