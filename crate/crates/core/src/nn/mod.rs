//! Small dense networks, exact gradients and the AdamW optimizer.

pub mod checkpoint;
mod mlp;
mod optim;

pub use mlp::{Activation, GradientSet, Layer, ParamSet, Tape};
pub use optim::{AdamWConfig, OptimizerState, StepInfo};
