use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{checkpoint, Activation, AdamWConfig, GradientSet, OptimizerState, ParamSet};

/// Toy classifier over generator modes. Its penultimate activations serve
/// as the learned embedding.
#[derive(Clone, Debug)]
pub struct Embedder {
    params: ParamSet,
    trained: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbedderTraining {
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
}

impl Default for EmbedderTraining {
    fn default() -> Self {
        EmbedderTraining {
            hidden: vec![32, 16],
            steps: 1200,
            batch: 64,
            learning_rate: 5e-3,
        }
    }
}

impl Embedder {
    /// Wraps frozen classifier weights (softmax output, at least one hidden
    /// layer).
    pub fn from_params(params: ParamSet) -> Result<Self> {
        let layers = params.layers();
        if layers.len() < 2 || layers.last().map(|l| l.activation()) != Some(Activation::Softmax) {
            return Err(Error::config("embedder needs a hidden layer and a softmax output"));
        }
        if params.output_dim() < 2 {
            return Err(Error::config("embedder needs at least two classes"));
        }
        Ok(Embedder { params, trained: true })
    }

    /// Random weights, flagged untrained: scoring with it is refused.
    pub fn untrained<R: Rng + ?Sized>(input: usize, classes: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let params = classifier_params(input, classes, hidden, rng)?;
        let mut e = Self::from_params(params)?;
        e.trained = false;
        Ok(e)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_params(checkpoint::load(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.params, path)
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn classes(&self) -> usize {
        self.params.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.params.layers().last().map_or(0, |l| l.inputs())
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.params.predict(x)
    }

    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (_, tape) = self.params.forward(x)?;
        Ok(tape.penultimate().to_vec())
    }

    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        let p = self.probabilities(x)?;
        Ok(argmax(&p))
    }

    /// Cross-entropy training on labelled generator samples.
    pub fn train<R: Rng + ?Sized>(
        inputs: &[Vec<f64>],
        labels: &[usize],
        classes: usize,
        cfg: &EmbedderTraining,
        rng: &mut R,
    ) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != labels.len() {
            return Err(Error::usage("embedder training needs matching non-empty inputs and labels"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::usage(format!("label {bad} out of range for {classes} classes")));
        }
        let mut params = classifier_params(inputs[0].len(), classes, &cfg.hidden, rng)?;
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
        let mut g = vec![0.0; classes];
        for _ in 0..cfg.steps {
            let mut grads = GradientSet::zeros_like(&params);
            for _ in 0..cfg.batch {
                if cursor == order.len() {
                    order.shuffle(rng);
                    cursor = 0;
                }
                let i = order[cursor];
                cursor += 1;
                let (p, tape) = params.forward(&inputs[i])?;
                g.iter_mut().for_each(|v| *v = 0.0);
                g[labels[i]] = -1.0 / p[labels[i]].max(1e-300);
                params.backward_add(&tape, &g, &mut grads)?;
                grads.increment_count();
            }
            opt.step(&mut params, &grads)?;
        }
        Self::from_params(params)
    }

    pub fn accuracy(&self, inputs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        let mut hits = 0usize;
        for (x, &l) in inputs.iter().zip(labels) {
            hits += usize::from(self.classify(x)? == l);
        }
        Ok(hits as f64 / inputs.len().max(1) as f64)
    }
}

fn classifier_params<R: Rng + ?Sized>(input: usize, classes: usize, hidden: &[usize], rng: &mut R) -> Result<ParamSet> {
    if hidden.is_empty() {
        return Err(Error::config("embedder needs at least one hidden layer"));
    }
    let mut sizes = vec![input];
    sizes.extend(hidden);
    sizes.push(classes);
    let mut acts = vec![Activation::Tanh; hidden.len()];
    acts.push(Activation::Softmax);
    ParamSet::random(&sizes, &acts, rng)
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
