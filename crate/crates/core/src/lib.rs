//! Two-stage food-intake recognition from a wrist watch and smart glasses.
//!
//! A masked U-Net trained on eating windows only flags anything it cannot
//! reconstruct as non-eating; windows that pass the gate go to a 1-D Swin
//! classifier that names the food. [`synth`] generates labelled sessions,
//! [`dataset`] windows and splits them, [`pipeline`] evaluates both stages.

pub mod classifier;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod fusion;
pub mod imu;
pub mod pipeline;
pub mod synth;
pub mod train;

pub use error::{CoreError, Result};
