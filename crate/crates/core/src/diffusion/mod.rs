//! DDPM core: noise schedule, forward noising, ε-prediction training loss,
//! and a reverse sampler that records per-step policy log-probabilities.

mod model;
mod sampler;
mod schedule;

pub use model::{time_embedding, DenoiserModel, DenoiserSpec, EpsModel, Switched};
pub use sampler::{
    ddpm_loss, ddpm_loss_step, forward_noise, gaussian_logprob, predict_x0, reverse_mean,
    sample_from_noise, sample_trajectory, x0_from_eps, StepRecord, Trajectory, TransitionEval,
};
pub use schedule::{NoiseSchedule, DEFAULT_BETA_MAX, DEFAULT_BETA_MIN, DEFAULT_STEPS};
