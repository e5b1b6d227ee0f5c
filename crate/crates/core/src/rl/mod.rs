//! Reward fine-tuning of the reverse chain viewed as an MDP.
//!
//! State `s_t = (x_t, t)`, action `a_t = x_{t−1}`, deterministic index
//! shift, and a reward that only the terminal sample x₀ receives. Updates
//! are clipped importance-sampling policy gradients, either over whole
//! chains from pure noise or over windows that start from a re-noised clean
//! reference at an intermediate step.

mod start;
mod train;
mod update;
mod window;

use rand::Rng;

use crate::diffusion::{sample_trajectory, DenoiserModel, EpsModel, Trajectory};
use crate::error::{Error, Result};
use crate::rewards::RewardFn;

pub use start::{generate_reference, make_start_states, renoise, NoiseHook, ReferenceSource, StartPlan, StartState};
pub use train::{hierarchical_train, latest_checkpoint, CheckpointSink, LogRow, TrainConfig, TrainingLog, LOG_HEADER};
pub use update::{clipped_is_gradient, ddpo_is_update, hrf_windowed_update, UpdateOutput};
pub use window::{
    candidate_steps, choose_from_table, cosine_distance, draw_cluster_steps, dynamic_window_select,
    select_initial_steps, CandidateRecord, SELECTION_HEADER, Cluster, DistanceMetric, DynamicParams, DynamicSelectionReport,
    InitialSteps, Selection, WindowSchedule,
};

#[derive(Clone, Debug, PartialEq)]
pub struct MdpConfig {
    /// Ratio trust region `[1 − ε, 1 + ε]`; `f64::INFINITY` disables it.
    pub clip_range: f64,
    pub batch_size: usize,
    pub samples_per_iteration: usize,
    /// Passes over the iteration's batches; one optimizer step per batch.
    pub updates_per_iteration: usize,
    pub normalize_advantages: bool,
}

impl Default for MdpConfig {
    fn default() -> Self {
        MdpConfig {
            clip_range: 1e-4,
            batch_size: 32,
            samples_per_iteration: 96,
            updates_per_iteration: 1,
            normalize_advantages: true,
        }
    }
}

impl MdpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_range > 0.0) {
            return Err(Error::config("clip range must be positive"));
        }
        if self.batch_size == 0 || self.updates_per_iteration == 0 {
            return Err(Error::config("batch size and update count must be at least 1"));
        }
        if self.samples_per_iteration < self.batch_size {
            return Err(Error::config("samples per iteration must cover at least one batch"));
        }
        Ok(())
    }

    pub fn num_batches(&self) -> usize {
        (self.samples_per_iteration / self.batch_size).max(1)
    }
}

/// Trajectories sampled under one frozen snapshot, with their rewards and
/// advantages.
#[derive(Clone, Debug)]
pub struct RolloutBatch {
    pub trajectories: Vec<Trajectory>,
    /// Content fingerprint of the sampling parameters.
    pub snapshot_id: u64,
    pub advantages: Vec<f64>,
}

impl RolloutBatch {
    pub fn rewards(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.reward.unwrap_or(f64::NAN)).collect()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Rewards shifted to mean 0 and scaled to unit population variance; all
/// zero when the rewards are (numerically) constant.
pub fn standardize(rewards: &[f64]) -> Vec<f64> {
    let n = rewards.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = rewards.iter().sum::<f64>() / n as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std < 1e-12 {
        return vec![0.0; n];
    }
    rewards.iter().map(|r| (r - mean) / std).collect()
}

/// Rolls out one trajectory per start state under `model`, rewards each
/// final sample and computes advantages. Any reward failure aborts the
/// whole batch.
pub fn collect_rollouts<R: Rng + ?Sized>(
    model: &DenoiserModel,
    starts: &[StartState],
    reward_fn: &dyn RewardFn,
    cfg: &MdpConfig,
    rng: &mut R,
) -> Result<RolloutBatch> {
    if starts.is_empty() {
        return Err(Error::usage("no start states"));
    }
    let steps = model.schedule().steps();
    let mut trajectories = Vec::with_capacity(starts.len());
    for s in starts {
        if (s.t == steps) != s.reference.is_none() {
            return Err(Error::usage(format!(
                "start state at t={} is inconsistent: pure noise exactly when t = T",
                s.t
            )));
        }
        let seed: u64 = rng.random();
        trajectories.push(sample_trajectory(model, s.t, &s.x_t, seed)?);
    }
    let mut rewards = Vec::with_capacity(trajectories.len());
    for (i, traj) in trajectories.iter_mut().enumerate() {
        let r = reward_fn
            .reward(&traj.x0)
            .map_err(|e| Error::Reward(format!("trajectory {i}: {e}")))?;
        if !r.is_finite() {
            return Err(Error::Reward(format!("trajectory {i}: non-finite reward {r}")));
        }
        traj.reward = Some(r);
        rewards.push(r);
    }
    let advantages = if cfg.normalize_advantages {
        standardize(&rewards)
    } else {
        rewards
    };
    Ok(RolloutBatch {
        trajectories,
        snapshot_id: model.params.fingerprint(),
        advantages,
    })
}
