//! Reward fine-tuning of small denoising diffusion models.
//!
//! The crate trains toy DDPMs from scratch, fine-tunes them towards a
//! scalar reward with clipped importance-sampling policy gradients over
//! the full reverse chain (DDPO) or over windows that start from re-noised
//! intermediate states (hierarchical fine-tuning), and measures how much
//! sample diversity survives.

pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod nn;
pub mod rewards;
pub mod rl;
pub mod seeds;

pub use error::{Error, Result};
