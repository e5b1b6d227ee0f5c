use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;

use crate::diffusion::model::{DenoiserModel, EpsModel};
use crate::diffusion::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::nn::{GradientSet, Tape};
use crate::seeds;

/// Closed-form `x_t = √ᾱ_t·x₀ + √(1−ᾱ_t)·ε`.
pub fn forward_noise(schedule: &NoiseSchedule, x0: &[f64], t: usize, noise: &[f64]) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    if x0.len() != noise.len() {
        return Err(Error::usage("sample and noise lengths differ"));
    }
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(noise).map(|(x, e)| a * x + b * e).collect())
}

/// Log density of `x` under `N(mean, σ² I)`.
pub fn gaussian_logprob(x: &[f64], mean: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::numeric(format!("gaussian needs sigma > 0, got {sigma}")));
    }
    if x.len() != mean.len() {
        return Err(Error::usage("point and mean lengths differ"));
    }
    let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    let d = x.len() as f64;
    Ok(-0.5 * d * (2.0 * PI * sigma * sigma).ln() - sq / (2.0 * sigma * sigma))
}

fn mean_from_eps(schedule: &NoiseSchedule, x_t: &[f64], t: usize, eps: &[f64]) -> Vec<f64> {
    let coef = schedule.beta(t) / (1.0 - schedule.alpha_bar(t)).sqrt();
    let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
    x_t.iter()
        .zip(eps)
        .map(|(x, e)| inv_sqrt_alpha * (x - coef * e))
        .collect()
}

/// Mean of the reverse kernel, `(x_t − β_t/√(1−ᾱ_t)·ε_θ)/√α_t`.
pub fn reverse_mean(model: &impl EpsModel, x_t: &[f64], t: usize) -> Result<Vec<f64>> {
    let eps = model.epsilon(x_t, t)?;
    Ok(mean_from_eps(model.schedule(), x_t, t, &eps))
}

/// One-shot estimate `x̃_{t→0} = (x_t − √(1−ᾱ_t)·ε_θ)/√ᾱ_t`.
pub fn predict_x0(model: &impl EpsModel, x_t: &[f64], t: usize) -> Result<Vec<f64>> {
    let eps = model.epsilon(x_t, t)?;
    x0_from_eps(model.schedule(), x_t, t, &eps)
}

pub fn x0_from_eps(schedule: &NoiseSchedule, x_t: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
    let ab = schedule.alpha_bar(t);
    if ab < 1e-12 {
        return Err(Error::numeric(format!("alpha_bar at step {t} is {ab:e}; cannot invert")));
    }
    let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x_t.iter().zip(eps).map(|(x, e)| (x - n * e) / s).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub x_t: Vec<f64>,
    pub mean: Vec<f64>,
    /// Log density of the sampled `x_{t−1}` under `N(mean, σ_t² I)`.
    pub logprob: f64,
}

/// A recorded reverse chain from `t_start` down to `x₀`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t_start: usize,
    /// Ordered `t_start, t_start − 1, …, 1`.
    pub steps: Vec<StepRecord>,
    pub x0: Vec<f64>,
    pub reward: Option<f64>,
    pub seed: u64,
}

impl Trajectory {
    /// The state produced by step `i` (i.e. `x_{t−1}` for `steps[i]`).
    pub fn next_state(&self, i: usize) -> &[f64] {
        if i + 1 < self.steps.len() {
            &self.steps[i + 1].x_t
        } else {
            &self.x0
        }
    }

    pub fn start_state(&self) -> &[f64] {
        self.steps.first().map(|s| s.x_t.as_slice()).unwrap_or(&self.x0)
    }

    /// Debug dump: `step,logprob,x0,x1,…` with one row per recorded step
    /// (the state is `x_t` entering that step) and a final `0` row for x₀.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dim = self.x0.len();
        write!(w, "step,logprob")?;
        for k in 0..dim {
            write!(w, ",x{k}")?;
        }
        writeln!(w)?;
        for s in &self.steps {
            write!(w, "{},{}", s.t, s.logprob)?;
            for v in &s.x_t {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        write!(w, "0,")?;
        for v in &self.x0 {
            write!(w, ",{v}")?;
        }
        writeln!(w)
    }
}

/// Runs the reverse chain from `x_start` at `t_start` down to x₀.
///
/// Noise draws come from a generator seeded with `seed`, one `d`-vector per
/// step in order, so two samplers with the same seed see identical noise
/// even under different models. A step with σ_t = 0 is deterministic and
/// records a log-probability of 0.
pub fn sample_trajectory(model: &impl EpsModel, t_start: usize, x_start: &[f64], seed: u64) -> Result<Trajectory> {
    let schedule = model.schedule();
    schedule.check_step(t_start)?;
    if x_start.len() != model.dim() {
        return Err(Error::usage(format!(
            "start state has length {}, model dimension is {}",
            x_start.len(),
            model.dim()
        )));
    }
    let mut rng = seeds::from_seed(seed);
    let mut steps = Vec::with_capacity(t_start);
    let mut x = x_start.to_vec();
    for t in (1..=t_start).rev() {
        let mean = reverse_mean(model, &x, t)?;
        let sigma = schedule.sigma(t);
        let z = seeds::normal_vec(&mut rng, x.len());
        let next: Vec<f64> = mean.iter().zip(&z).map(|(m, e)| m + sigma * e).collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite state after reverse step t={t}")));
        }
        let logprob = if sigma > 0.0 {
            gaussian_logprob(&next, &mean, sigma)?
        } else {
            0.0
        };
        steps.push(StepRecord {
            t,
            x_t: std::mem::replace(&mut x, next),
            mean,
            logprob,
        });
    }
    Ok(Trajectory {
        t_start,
        steps,
        x0: x,
        reward: None,
        seed,
    })
}

/// Full generation from fresh `N(0, I)` noise drawn from the same seed.
pub fn sample_from_noise(model: &impl EpsModel, seed: u64) -> Result<Trajectory> {
    let mut rng = seeds::stream(seed, "x_T");
    let x_t = seeds::normal_vec(&mut rng, model.dim());
    sample_trajectory(model, model.schedule().steps(), &x_t, seed)
}

/// Policy quantities for one stored transition `x_t → x_prev` under a
/// trainable model.
pub struct TransitionEval {
    pub logprob: f64,
    tape: Tape,
    /// `∂ log p / ∂ε_θ` at this transition.
    eps_grad: Vec<f64>,
}

impl DenoiserModel {
    pub fn eval_transition(&self, x_t: &[f64], t: usize, x_prev: &[f64]) -> Result<TransitionEval> {
        let schedule = self.schedule();
        let (eps, tape) = self.epsilon_with_tape(x_t, t)?;
        let mean = mean_from_eps(schedule, x_t, t, &eps);
        let sigma = schedule.sigma(t);
        let logprob = gaussian_logprob(x_prev, &mean, sigma)?;
        // ∂μ/∂ε = −β_t / (√α_t √(1−ᾱ_t)); ∂ log p/∂μ = (x_prev − μ)/σ².
        let dmean_deps = -schedule.beta(t) / (schedule.alpha(t).sqrt() * (1.0 - schedule.alpha_bar(t)).sqrt());
        let scale = dmean_deps / (sigma * sigma);
        let eps_grad = x_prev.iter().zip(&mean).map(|(x, m)| scale * (x - m)).collect();
        Ok(TransitionEval {
            logprob,
            tape,
            eps_grad,
        })
    }

    /// Adds `weight · ∇_θ log p_θ(x_prev | x_t)` into `into`.
    pub fn add_logprob_grad(&self, eval: &TransitionEval, weight: f64, into: &mut GradientSet) -> Result<()> {
        let g: Vec<f64> = eval.eps_grad.iter().map(|v| v * weight).collect();
        self.params.backward_add(&eval.tape, &g, into)
    }
}

fn draw_noise_pairs<R: Rng + ?Sized>(steps: usize, dim: usize, n: usize, rng: &mut R) -> Vec<(usize, Vec<f64>)> {
    (0..n)
        .map(|_| {
            let t = rng.random_range(1..=steps);
            (t, seeds::normal_vec(rng, dim))
        })
        .collect()
}

/// Mini-batch ε-prediction loss `mean ‖ε − ε_θ(x_t, t)‖²` with `t`
/// uniform on `1..=T` and fresh ε per example.
pub fn ddpm_loss<R: Rng + ?Sized>(model: &impl EpsModel, batch: &[Vec<f64>], rng: &mut R) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::usage("empty batch"));
    }
    let schedule = model.schedule();
    let pairs = draw_noise_pairs(schedule.steps(), model.dim(), batch.len(), rng);
    let mut total = 0.0;
    for (x0, (t, eps)) in batch.iter().zip(&pairs) {
        let x_t = forward_noise(schedule, x0, *t, eps)?;
        let pred = model.epsilon(&x_t, *t)?;
        total += eps.iter().zip(&pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

/// [`ddpm_loss`] plus its exact gradient; draws the same `(t, ε)` sequence
/// for the same generator state.
pub fn ddpm_loss_step<R: Rng + ?Sized>(model: &DenoiserModel, batch: &[Vec<f64>], rng: &mut R) -> Result<(f64, GradientSet)> {
    if batch.is_empty() {
        return Err(Error::usage("empty batch"));
    }
    let schedule = model.schedule();
    let pairs = draw_noise_pairs(schedule.steps(), model.dim(), batch.len(), rng);
    let mut grads = GradientSet::zeros_like(&model.params);
    let mut total = 0.0;
    for (x0, (t, eps)) in batch.iter().zip(&pairs) {
        let x_t = forward_noise(schedule, x0, *t, eps)?;
        let (pred, tape) = model.epsilon_with_tape(&x_t, *t)?;
        let diff: Vec<f64> = pred.iter().zip(eps).map(|(p, e)| p - e).collect();
        total += diff.iter().map(|v| v * v).sum::<f64>();
        let out_grad: Vec<f64> = diff.iter().map(|v| 2.0 * v).collect();
        model.params.backward_add(&tape, &out_grad, &mut grads)?;
        grads.increment_count();
    }
    Ok((total / batch.len() as f64, grads))
}
