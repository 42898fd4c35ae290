//! Minimal tensor, reverse-mode autodiff, layer and optimizer kernel.
//!
//! Everything is generic over [`Float`] so models train at `f32` and are
//! gradient-checked at `f64` with the same code.

pub mod checkpoint;
pub mod error;
pub mod float;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod layers;
pub mod sgd;
pub mod tensor;

pub use error::{NnError, Result};
pub use float::Float;
pub use graph::{Gradients, Graph, Mode, NodeId, ParamId, ParamStore};
pub use kernels::{ConvGeom, ConvParams};
pub use layers::{Layer, LayerSpec};
pub use sgd::{Sgd, SgdConfig};
pub use tensor::Tensor;
