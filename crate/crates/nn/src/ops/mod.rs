//! Differentiable operations, implemented as methods on [`crate::Graph`].

pub mod activation;
pub mod attention;
pub mod conv;
pub mod linear;
pub mod loss;
pub mod norm;
pub mod pool;
pub mod shape;

pub use activation::softmax_in_place;
pub use attention::MASKED;
pub use norm::{BatchNormOpts, NormMode, RunningStats};
