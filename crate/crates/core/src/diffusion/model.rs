use rand::Rng;

use crate::diffusion::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::nn::{Activation, ParamSet, Tape};

/// Anything that predicts the injected noise ε from `(x_t, t)` under a
/// given schedule. The reverse kernel, the sampler and the one-shot x₀
/// estimate are all written against this.
pub trait EpsModel {
    fn schedule(&self) -> &NoiseSchedule;
    fn dim(&self) -> usize;
    fn epsilon(&self, x_t: &[f64], t: usize) -> Result<Vec<f64>>;
}

/// Sinusoidal embedding of step `t`, rescaled so the frequencies cover a
/// 1000-step range regardless of T. `dim` must be even.
pub fn time_embedding(t: usize, steps: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let pos = t as f64 * 1000.0 / steps as f64;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = (-(10_000f64).ln() * i as f64 / half as f64).exp();
        out.push((pos * freq).sin());
    }
    for i in 0..half {
        let freq = (-(10_000f64).ln() * i as f64 / half as f64).exp();
        out.push((pos * freq).cos());
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserSpec {
    pub dim: usize,
    pub hidden: Vec<usize>,
    pub time_embed_dim: usize,
    pub activation: Activation,
}

impl DenoiserSpec {
    pub fn new(dim: usize) -> Self {
        DenoiserSpec {
            dim,
            hidden: vec![128, 128, 128],
            time_embed_dim: 16,
            activation: Activation::Tanh,
        }
    }
}

/// ε-prediction network: input is `x_t` concatenated with the time
/// embedding, output has the data dimension.
#[derive(Clone, Debug)]
pub struct DenoiserModel {
    pub params: ParamSet,
    dim: usize,
    time_embed_dim: usize,
    schedule: NoiseSchedule,
    embed_cache: Vec<Vec<f64>>,
}

impl DenoiserModel {
    pub fn new(params: ParamSet, dim: usize, time_embed_dim: usize, schedule: NoiseSchedule) -> Result<Self> {
        if time_embed_dim % 2 != 0 {
            return Err(Error::config("time embedding dimension must be even"));
        }
        if params.input_dim() != dim + time_embed_dim || params.output_dim() != dim {
            return Err(Error::config(format!(
                "denoiser for d={dim} with {time_embed_dim}-dim time embedding needs {}->{dim}, got {}->{}",
                dim + time_embed_dim,
                params.input_dim(),
                params.output_dim()
            )));
        }
        let steps = schedule.steps();
        let embed_cache = (1..=steps)
            .map(|t| time_embedding(t, steps, time_embed_dim))
            .collect();
        Ok(DenoiserModel {
            params,
            dim,
            time_embed_dim,
            schedule,
            embed_cache,
        })
    }

    pub fn random<R: Rng + ?Sized>(spec: &DenoiserSpec, schedule: NoiseSchedule, rng: &mut R) -> Result<Self> {
        let mut sizes = vec![spec.dim + spec.time_embed_dim];
        sizes.extend(&spec.hidden);
        sizes.push(spec.dim);
        let mut acts = vec![spec.activation; spec.hidden.len()];
        acts.push(Activation::Identity);
        let params = ParamSet::random(&sizes, &acts, rng)?;
        Self::new(params, spec.dim, spec.time_embed_dim, schedule)
    }

    pub fn time_embed_dim(&self) -> usize {
        self.time_embed_dim
    }

    fn input(&self, x_t: &[f64], t: usize) -> Result<Vec<f64>> {
        self.schedule.check_step(t)?;
        if x_t.len() != self.dim {
            return Err(Error::config(format!(
                "state has length {}, model dimension is {}",
                x_t.len(),
                self.dim
            )));
        }
        let mut input = Vec::with_capacity(self.dim + self.time_embed_dim);
        input.extend_from_slice(x_t);
        input.extend_from_slice(&self.embed_cache[t - 1]);
        Ok(input)
    }

    pub fn epsilon_with_tape(&self, x_t: &[f64], t: usize) -> Result<(Vec<f64>, Tape)> {
        let input = self.input(x_t, t)?;
        self.params.forward(&input)
    }

    /// Same network, different parameters (shape must match).
    pub fn with_params(&self, params: ParamSet) -> Result<Self> {
        Self::new(params, self.dim, self.time_embed_dim, self.schedule.clone())
    }
}

impl EpsModel for DenoiserModel {
    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn epsilon(&self, x_t: &[f64], t: usize) -> Result<Vec<f64>> {
        let input = self.input(x_t, t)?;
        self.params.predict(&input)
    }
}

/// Uses `upper` for steps `t > switch_at` and `lower` for `t <= switch_at`.
pub struct Switched<'a, A: EpsModel, B: EpsModel> {
    pub upper: &'a A,
    pub lower: &'a B,
    pub switch_at: usize,
}

impl<A: EpsModel, B: EpsModel> EpsModel for Switched<'_, A, B> {
    fn schedule(&self) -> &NoiseSchedule {
        self.upper.schedule()
    }

    fn dim(&self) -> usize {
        self.upper.dim()
    }

    fn epsilon(&self, x_t: &[f64], t: usize) -> Result<Vec<f64>> {
        if t > self.switch_at {
            self.upper.epsilon(x_t, t)
        } else {
            self.lower.epsilon(x_t, t)
        }
    }
}
