//! Dense tensors, reverse-mode differentiation, seeded randomness and the
//! primitive kernels used by every other module.

mod graph;
mod params;
mod rng;
mod scalar;
mod tensor;

pub mod gradcheck;
pub mod kernels;

pub use gradcheck::{grad_check, grad_check_where, GradCheckReport};
pub use graph::{Function, Graph, Var};
pub use kernels::{layer_norm, softmax_axis, stable_softmax, top_k_indices};
pub use params::ParamStore;
pub use rng::{derive_seed, Rng};
pub use scalar::Scalar;
pub use tensor::Tensor;
