use crate::diffusion::{DenoiserModel, EpsModel};
use crate::error::{Error, Result};
use crate::nn::GradientSet;
use crate::rl::RolloutBatch;

/// Accumulated ascent direction plus importance-ratio diagnostics.
#[derive(Clone, Debug)]
pub struct UpdateOutput {
    /// `Σ_i Σ_t w_{i,t} ∇_θ log p_θ(x_{t−1}|x_t)`, count = #trajectories.
    pub grads: GradientSet,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    /// Largest `|log ratio|` seen.
    pub max_log_ratio: f64,
    pub transitions: usize,
}

/// Clipped importance-sampling policy gradient over every recorded
/// transition of every trajectory in `batch`.
///
/// Per transition, `r = p_θ / p_θold`; the pessimistic surrogate
/// `min(r·A, clip(r, 1−ε, 1+ε)·A)` contributes `A·r·∇log p_θ` when its
/// unclipped branch is active and nothing otherwise.
pub fn clipped_is_gradient(
    model: &DenoiserModel,
    old: &DenoiserModel,
    batch: &RolloutBatch,
    clip_range: f64,
) -> Result<UpdateOutput> {
    if old.params.fingerprint() != batch.snapshot_id {
        return Err(Error::usage("rollout batch was not sampled under the given snapshot"));
    }
    if model.params.sizes() != old.params.sizes() {
        return Err(Error::usage("model and snapshot differ in shape"));
    }
    if batch.advantages.len() != batch.trajectories.len() {
        return Err(Error::usage("advantage count does not match trajectory count"));
    }
    if !(clip_range > 0.0) {
        return Err(Error::config("clip range must be positive"));
    }
    let (lo, hi) = (1.0 - clip_range, 1.0 + clip_range);
    let mut grads = GradientSet::zeros_like(&model.params);
    let (mut ratio_sum, mut clipped, mut n, mut max_log) = (0.0, 0usize, 0usize, 0.0f64);
    for (traj, &adv) in batch.trajectories.iter().zip(&batch.advantages) {
        for (i, step) in traj.steps.iter().enumerate() {
            let eval = model.eval_transition(&step.x_t, step.t, traj.next_state(i))?;
            let log_ratio = eval.logprob - step.logprob;
            let ratio = log_ratio.exp();
            if !ratio.is_finite() {
                return Err(Error::numeric(format!("non-finite importance ratio at t={}", step.t)));
            }
            max_log = max_log.max(log_ratio.abs());
            ratio_sum += ratio;
            n += 1;
            if (ratio - 1.0).abs() > clip_range {
                clipped += 1;
            }
            if adv == 0.0 {
                continue;
            }
            let unclipped = ratio * adv;
            let bounded = ratio.clamp(lo, hi) * adv;
            if unclipped <= bounded {
                model.add_logprob_grad(&eval, adv * ratio, &mut grads)?;
            }
        }
        grads.increment_count();
    }
    Ok(UpdateOutput {
        grads,
        mean_ratio: if n > 0 { ratio_sum / n as f64 } else { 1.0 },
        clip_fraction: if n > 0 { clipped as f64 / n as f64 } else { 0.0 },
        max_log_ratio: max_log,
        transitions: n,
    })
}

/// Whole-chain update: every trajectory must start from pure noise at T.
pub fn ddpo_is_update(
    model: &DenoiserModel,
    old: &DenoiserModel,
    batch: &RolloutBatch,
    clip_range: f64,
) -> Result<UpdateOutput> {
    let steps = model.schedule().steps();
    if let Some(t) = batch.trajectories.iter().find(|t| t.t_start != steps) {
        return Err(Error::usage(format!(
            "whole-chain update needs trajectories from t={steps}, found one from t={}",
            t.t_start
        )));
    }
    clipped_is_gradient(model, old, batch, clip_range)
}

/// Windowed update: the sum runs over each trajectory's recorded steps from
/// its window start down to 1.
pub fn hrf_windowed_update(
    model: &DenoiserModel,
    old: &DenoiserModel,
    batch: &RolloutBatch,
    clip_range: f64,
) -> Result<UpdateOutput> {
    if let Some(t) = batch.trajectories.iter().find(|t| t.steps.len() != t.t_start) {
        return Err(Error::usage(format!(
            "trajectory from t={} records {} steps",
            t.t_start,
            t.steps.len()
        )));
    }
    clipped_is_gradient(model, old, batch, clip_range)
}
