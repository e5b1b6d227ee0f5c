use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{checkpoint, Activation, AdamWConfig, OptimizerState, ParamSet};
use crate::rewards::RewardFn;

/// Frozen learned scorer returning values in [1, 10]:
/// `1 + 9·sigmoid(net(x))`.
#[derive(Clone, Debug)]
pub struct FixedScorer {
    params: ParamSet,
}

fn squash(raw: f64) -> f64 {
    1.0 + 9.0 / (1.0 + (-raw).exp())
}

#[derive(Clone, Debug)]
pub struct ScorerTraining {
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
}

impl Default for ScorerTraining {
    fn default() -> Self {
        ScorerTraining {
            hidden: vec![32, 32],
            steps: 1500,
            batch: 64,
            learning_rate: 3e-3,
        }
    }
}

impl FixedScorer {
    pub fn new(params: ParamSet) -> Result<Self> {
        if params.output_dim() != 1 {
            return Err(Error::config("scorer network must have a single output"));
        }
        Ok(FixedScorer { params })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(checkpoint::load(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.params, path)
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(squash(self.params.predict(x)?[0]))
    }

    /// Regresses the squashed output onto `targets` (each in [1, 10]) by
    /// mean squared error, then freezes.
    pub fn train<R: Rng + ?Sized>(
        inputs: &[Vec<f64>],
        targets: &[f64],
        cfg: &ScorerTraining,
        rng: &mut R,
    ) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::usage("scorer training needs matching non-empty inputs and targets"));
        }
        let mut sizes = vec![inputs[0].len()];
        sizes.extend(&cfg.hidden);
        sizes.push(1);
        let mut acts = vec![Activation::Tanh; cfg.hidden.len()];
        acts.push(Activation::Identity);
        let mut params = ParamSet::random(&sizes, &acts, rng)?;
        let mut opt = OptimizerState::new(
            &params,
            AdamWConfig {
                learning_rate: cfg.learning_rate,
                weight_decay: 0.0,
                clip_norm: None,
                ..Default::default()
            },
        );
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        let mut cursor = order.len();
        for _ in 0..cfg.steps {
            let mut grads = crate::nn::GradientSet::zeros_like(&params);
            for _ in 0..cfg.batch {
                if cursor == order.len() {
                    order.shuffle(rng);
                    cursor = 0;
                }
                let i = order[cursor];
                cursor += 1;
                let (out, tape) = params.forward(&inputs[i])?;
                let s = 1.0 / (1.0 + (-out[0]).exp());
                let score = 1.0 + 9.0 * s;
                let g = 2.0 * (score - targets[i]) * 9.0 * s * (1.0 - s);
                params.backward_add(&tape, &[g], &mut grads)?;
                grads.increment_count();
            }
            opt.step(&mut params, &grads)?;
        }
        Self::new(params)
    }
}

impl RewardFn for FixedScorer {
    fn reward(&self, x0: &[f64]) -> Result<f64> {
        self.score(x0).map_err(|e| Error::Reward(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    #[test]
    fn zero_weight_scorer_sits_at_midpoint() {
        let p = ParamSet::zeros(&[2, 4, 1], &[Activation::Tanh, Activation::Identity]).unwrap();
        let s = FixedScorer::new(p).unwrap();
        assert_eq!(s.score(&[3.0, -1.0]).unwrap(), 5.5);
    }

    #[test]
    fn learns_ring_proximity_and_is_deterministic() {
        let mut rng = seeds::from_seed(4);
        let target = |x: &[f64]| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            1.0 + 9.0 * (-(r - 3.0).powi(2) / 0.5).exp()
        };
        let inputs: Vec<Vec<f64>> = (0..2000)
            .map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
            .collect();
        let targets: Vec<f64> = inputs.iter().map(|x| target(x)).collect();
        let scorer = FixedScorer::train(&inputs, &targets, &ScorerTraining::default(), &mut rng).unwrap();
        let on_ring = scorer.score(&[3.0, 0.0]).unwrap();
        let centre = scorer.score(&[0.0, 0.0]).unwrap();
        let far = scorer.score(&[4.8, 4.8]).unwrap();
        assert!(on_ring > centre + 3.0 && on_ring > far + 3.0, "{on_ring} {centre} {far}");
        assert_eq!(scorer.score(&[1.0, 2.0]).unwrap(), scorer.score(&[1.0, 2.0]).unwrap());
        let v = scorer.score(&[100.0, -100.0]).unwrap();
        assert!((1.0..=10.0).contains(&v));
    }
}
