//! Dense tensors and a tape-based reverse-mode autodiff engine.
//!
//! The engine is deliberately narrow: NCHW image tensors, the handful of
//! layers a small convolutional GAN needs, and a generic element type so the
//! same graph runs in `f32` for training and `f64` for gradient checking.

mod conv;
mod element;
mod error;
mod graph;
mod optim;
mod params;
mod tensor;

pub use element::Element;
pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Var};
pub use optim::{Adam, AdamConfig, AdamState};
pub use params::{Param, ParamSet};
pub use tensor::Tensor;

/// Matrix product helper shared by the conv kernels and the public API.
pub use conv::gemm;
