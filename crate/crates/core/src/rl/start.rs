use rand::Rng;

use crate::diffusion::{forward_noise, sample_trajectory, DenoiserModel, EpsModel, NoiseSchedule};
use crate::error::{Error, Result};
use crate::seeds;

/// Initial state `(t, x_t)` of a rollout. `reference` indexes the clean
/// sample it was re-noised from; `None` means pure noise at `t = T`.
#[derive(Clone, Debug, PartialEq)]
pub struct StartState {
    pub t: usize,
    pub x_t: Vec<f64>,
    pub reference: Option<usize>,
}

/// How the re-noising ε is drawn. `Zero` is a test hook.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseHook {
    Sampled,
    Zero,
}

#[derive(Clone, Debug)]
pub struct StartPlan {
    pub references: Vec<Vec<f64>>,
    pub states: Vec<StartState>,
}

/// Where clean references for re-noising come from.
#[derive(Clone, Debug, PartialEq)]
pub enum ReferenceSource {
    /// Full rollouts of the model being fine-tuned.
    Model,
    /// Uniform draws from a fixed sample set (e.g. held-out data).
    Dataset(Vec<Vec<f64>>),
}

impl ReferenceSource {
    pub fn draw<R: Rng + ?Sized>(&self, model: &DenoiserModel, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            ReferenceSource::Model => generate_reference(model, rng),
            ReferenceSource::Dataset(samples) => {
                if samples.is_empty() {
                    return Err(Error::config("reference dataset is empty"));
                }
                let x = &samples[rng.random_range(0..samples.len())];
                if x.len() != model.dim() {
                    return Err(Error::config("reference dataset dimension does not match the model"));
                }
                Ok(x.clone())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ReferenceSource::Model => "model",
            ReferenceSource::Dataset(_) => "dataset",
        }
    }
}

/// Clean sample from a full rollout of `model` starting at fresh noise.
pub fn generate_reference<R: Rng + ?Sized>(model: &DenoiserModel, rng: &mut R) -> Result<Vec<f64>> {
    let x_t = seeds::normal_vec(rng, model.dim());
    let seed: u64 = rng.random();
    Ok(sample_trajectory(model, model.schedule().steps(), &x_t, seed)?.x0)
}

/// Draw from `ρ(x_noised)` at step `t`: `forward_noise(reference, t, ε)`.
/// At `t = T` the start is pure `N(0, I)` and does not see the reference.
pub fn renoise<R: Rng + ?Sized>(
    schedule: &NoiseSchedule,
    reference: &[f64],
    t: usize,
    hook: NoiseHook,
    rng: &mut R,
) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    let eps = match hook {
        NoiseHook::Sampled => seeds::normal_vec(rng, reference.len()),
        NoiseHook::Zero => vec![0.0; reference.len()],
    };
    if t == schedule.steps() {
        return Ok(eps);
    }
    forward_noise(schedule, reference, t, &eps)
}

/// Start states for `t_targets`. Consecutive groups of `per_reference`
/// targets share one clean reference from the current model; a reference
/// is only generated for groups that contain some `t < T`.
pub fn make_start_states<R: Rng + ?Sized>(
    model: &DenoiserModel,
    t_targets: &[usize],
    per_reference: usize,
    hook: NoiseHook,
    rng: &mut R,
) -> Result<StartPlan> {
    if per_reference == 0 {
        return Err(Error::usage("per_reference must be at least 1"));
    }
    let schedule = model.schedule();
    let steps = schedule.steps();
    let mut references = Vec::new();
    let mut states = Vec::with_capacity(t_targets.len());
    for group in t_targets.chunks(per_reference) {
        for &t in group {
            schedule.check_step(t)?;
        }
        let reference = if group.iter().any(|&t| t < steps) {
            references.push(generate_reference(model, rng)?);
            Some(references.len() - 1)
        } else {
            None
        };
        for &t in group {
            let ref_x = reference.map(|i| references[i].as_slice());
            let x_t = match ref_x {
                Some(r) => renoise(schedule, r, t, hook, rng)?,
                None => renoise(schedule, &vec![0.0; model.dim()], t, hook, rng)?,
            };
            states.push(StartState {
                t,
                x_t,
                reference: if t < steps { reference } else { None },
            });
        }
    }
    Ok(StartPlan { references, states })
}
