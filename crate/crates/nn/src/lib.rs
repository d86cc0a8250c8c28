//! Minimal dense-tensor core with reverse-mode differentiation.
//!
//! Everything needed to train a 1-D U-Net and a 1-D shifted-window
//! transformer on the CPU: convolutions, normalization, windowed attention,
//! losses, Adam, a binary checkpoint format and a finite-difference checker.
//! Kernels run in a fixed reduction order, so a given input always produces
//! bit-identical outputs and gradients.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod param;
pub mod rng;
pub mod scalar;
pub mod suite;
pub mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use checkpoint::Checkpoint;
pub use error::{NnError, Result};
pub use gradcheck::{grad_check, grad_check_many, GradCheckReport};
pub use graph::{Gradients, Graph, ParamId, Var};
pub use ops::{BatchNormOpts, NormMode, RunningStats, MASKED};
pub use param::{init_fan_in, ParamStore, Parameter};
pub use rng::SplitMix64;
pub use scalar::Float;
pub use tensor::Tensor;
