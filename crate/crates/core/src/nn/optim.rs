//! AdamW with global-norm gradient clipping.

use crate::error::{Error, Result};
use crate::nn::mlp::{GradientSet, ParamSet};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Gradients with a larger global L2 norm are rescaled to this norm.
    pub clip_norm: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 1e-3,
            weight_decay: 1e-3,
            clip_norm: Some(4.5),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    /// Global norm of the averaged gradient before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

impl OptimizerState {
    pub fn new(params: &ParamSet, config: AdamWConfig) -> Self {
        let n = params.num_params();
        OptimizerState {
            config,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Averages `grads` over its term count, clips the global norm, then
    /// applies one decoupled-weight-decay Adam update (descent).
    pub fn step(&mut self, params: &mut ParamSet, grads: &GradientSet) -> Result<StepInfo> {
        if !grads.matches(params) || self.first_moment.len() != params.num_params() {
            return Err(Error::usage("optimizer, parameters and gradients disagree in shape"));
        }
        let mut g = grads.mean();
        if !g.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite gradient at optimizer step {}",
                self.step + 1
            )));
        }
        let grad_norm = g.norm();
        let mut clipped = false;
        if let Some(max) = self.config.clip_norm {
            if grad_norm > max {
                g.scale(max / grad_norm);
                clipped = true;
            }
        }

        self.step += 1;
        let c = &self.config;
        let bias1 = 1.0 - c.beta1.powi(self.step as i32);
        let bias2 = 1.0 - c.beta2.powi(self.step as i32);
        let decay = 1.0 - c.learning_rate * c.weight_decay;

        let mut flat_grad = g.values_mut();
        let mut idx = 0;
        for layer in params.layers_mut() {
            for p in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                let gi = *flat_grad.next().expect("shape checked above");
                let m = &mut self.first_moment[idx];
                let v = &mut self.second_moment[idx];
                *m = c.beta1 * *m + (1.0 - c.beta1) * gi;
                *v = c.beta2 * *v + (1.0 - c.beta2) * gi * gi;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p = *p * decay - c.learning_rate * m_hat / (v_hat.sqrt() + c.eps);
                idx += 1;
            }
        }
        if !params.is_finite() {
            return Err(Error::numeric(format!(
                "parameters became non-finite at optimizer step {}",
                self.step
            )));
        }
        Ok(StepInfo { grad_norm, clipped })
    }
}
