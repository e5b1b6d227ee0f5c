use crate::error::{Error, Result};
use crate::metrics::Embedder;

/// `exp(mean_x KL(p(y|x) ‖ p̄(y)))` for rows of class probabilities.
pub fn inception_score_from_probs(probs: &[Vec<f64>]) -> Result<f64> {
    let n = probs.len();
    if n == 0 {
        return Err(Error::usage("inception score needs samples"));
    }
    let k = probs[0].len();
    if k == 0 || probs.iter().any(|p| p.len() != k) {
        return Err(Error::usage("probability rows differ in length"));
    }
    for (i, p) in probs.iter().enumerate() {
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-9 || p.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::numeric(format!("row {i} is not a probability vector (sum {s})")));
        }
    }
    let mut marginal = vec![0.0; k];
    for p in probs {
        marginal.iter_mut().zip(p).for_each(|(m, v)| *m += v);
    }
    marginal.iter_mut().for_each(|m| *m /= n as f64);
    let mean_kl = probs
        .iter()
        .map(|p| {
            p.iter()
                .zip(&marginal)
                .filter(|(v, _)| **v > 0.0)
                .map(|(v, m)| v * (v / m).ln())
                .sum::<f64>()
        })
        .sum::<f64>()
        / n as f64;
    Ok(mean_kl.exp())
}

pub fn inception_style_score(samples: &[Vec<f64>], embedder: &Embedder) -> Result<f64> {
    if !embedder.is_trained() {
        return Err(Error::usage("inception-style score requires a trained embedder"));
    }
    if samples.len() < 10 {
        return Err(Error::usage(format!("inception-style score needs at least 10 samples, got {}", samples.len())));
    }
    let probs = samples
        .iter()
        .map(|s| embedder.probabilities(s))
        .collect::<Result<Vec<_>>>()?;
    inception_score_from_probs(&probs)
}
