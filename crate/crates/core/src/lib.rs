//! Coordinate derivatives of DeepONet fields through a zero coordinate shift,
//! alongside per-function and pointwise-duplication baselines, with the
//! tensor, tape, network, PDE and training pieces they need.

pub mod autograd;
pub mod bench;
pub mod checks;
pub mod error;
mod format;
pub mod nets;
pub mod pde;
pub mod reference;
pub mod sampling;
pub mod scalar;
pub mod strategies;
pub mod tensor;
pub mod train;

pub use autograd::{Graph, GraphStats, Prim, Var};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{Shape, Tensor};

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Graph64 = Graph<f64>;
pub type Graph32 = Graph<f32>;
pub type DeepONet64 = nets::DeepONet<f64>;
pub type DeepONet32 = nets::DeepONet<f32>;
