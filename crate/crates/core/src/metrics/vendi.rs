//! Vendi score: `exp(−Σ λ log λ)` over the eigenvalues of the cosine
//! similarity kernel divided by `n`.
//!
//! For unit-normalized rows `X` (n × f), the nonzero eigenvalues of
//! `X Xᵀ / n` equal those of `Xᵀ X / n`, so whichever side is smaller is
//! decomposed.

use std::io::Write;

use crate::error::{Error, Result};
use crate::metrics::linalg::symmetric_eigenvalues;

/// Cosine-similarity kernel over a sample set.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityKernel {
    pub n: usize,
    /// Row-major n × n.
    pub matrix: Vec<f64>,
    pub normalized: bool,
}

pub fn unit_normalize(features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::numeric(format!("feature vector {i} has zero or non-finite norm")));
            }
            Ok(f.iter().map(|v| v / norm).collect())
        })
        .collect()
}

impl SimilarityKernel {
    pub fn cosine(features: &[Vec<f64>]) -> Result<Self> {
        let unit = unit_normalize(features)?;
        let n = unit.len();
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = if i == j { 1.0 } else { dot(&unit[i], &unit[j]) };
                matrix[i * n + j] = v;
                matrix[j * n + i] = v;
            }
        }
        Ok(SimilarityKernel {
            n,
            matrix,
            normalized: false,
        })
    }

    pub fn normalized(mut self) -> Self {
        if !self.normalized {
            let n = self.n as f64;
            self.matrix.iter_mut().for_each(|v| *v /= n);
            self.normalized = true;
        }
        self
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        symmetric_eigenvalues(&self.matrix, self.n)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `exp` of the Shannon entropy of `eigenvalues` after clamping negatives to
/// 0; rejects sets whose sum strays from 1 by more than 1e-9.
pub fn entropy_exp(eigenvalues: &[f64]) -> Result<f64> {
    let sum: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::numeric(format!("normalized kernel eigenvalues sum to {sum}, expected 1")));
    }
    let h: f64 = eigenvalues
        .iter()
        .map(|&l| l.max(0.0))
        .filter(|&l| l > 0.0)
        .map(|l| -l * l.ln())
        .sum();
    Ok(h.exp())
}

/// Gram matrix `Xᵀ X` of unit rows, accumulated row by row.
struct FeatureGram {
    dim: usize,
    gram: Vec<f64>,
    rows: usize,
}

impl FeatureGram {
    fn new(dim: usize) -> Self {
        FeatureGram {
            dim,
            gram: vec![0.0; dim * dim],
            rows: 0,
        }
    }

    fn push(&mut self, row: &[f64]) {
        let f = self.dim;
        for i in 0..f {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            for j in 0..f {
                self.gram[i * f + j] += ri * row[j];
            }
        }
        self.rows += 1;
    }

    fn eigenvalues(&self) -> Result<Vec<f64>> {
        let n = self.rows as f64;
        let mut m: Vec<f64> = self.gram.iter().map(|v| v / n).collect();
        // Exact symmetry regardless of summation order.
        let f = self.dim;
        for i in 0..f {
            for j in 0..i {
                let avg = 0.5 * (m[i * f + j] + m[j * f + i]);
                m[i * f + j] = avg;
                m[j * f + i] = avg;
            }
        }
        symmetric_eigenvalues(&m, f)
    }
}

/// Vendi score of precomputed feature vectors.
pub fn vendi_from_features(features: &[Vec<f64>]) -> Result<f64> {
    if features.len() < 2 {
        return Err(Error::usage("vendi score needs at least two samples"));
    }
    let unit = unit_normalize(features)?;
    let dim = unit[0].len();
    if unit.iter().any(|u| u.len() != dim) {
        return Err(Error::usage("feature vectors differ in length"));
    }
    let eig = if unit.len() <= dim {
        SimilarityKernel::cosine(&unit)?.normalized().eigenvalues()?
    } else {
        let mut g = FeatureGram::new(dim);
        unit.iter().for_each(|u| g.push(u));
        g.eigenvalues()?
    };
    entropy_exp(&eig)
}

pub fn vendi_score<F>(samples: &[Vec<f64>], feature_fn: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let features = samples.iter().map(|s| feature_fn(s)).collect::<Result<Vec<_>>>()?;
    vendi_from_features(&features)
}

/// Sample counts `start, start+step, …, knee` then `knee+coarse_step, …`
/// up to and including `max` (the last entry is clipped to `max`).
pub fn curve_schedule(start: usize, step: usize, knee: usize, coarse_step: usize, max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut n = start;
    while n <= knee.min(max) {
        out.push(n);
        n += step.max(1);
    }
    let mut n = out.last().copied().unwrap_or(start) + coarse_step.max(1);
    while n <= max {
        out.push(n);
        n += coarse_step.max(1);
    }
    if out.last() != Some(&max) && max >= start {
        out.push(max);
    }
    out
}

/// Default desk-scale schedule: 50 to 200 by 5, then by 50.
pub fn default_curve_schedule(max: usize) -> Vec<usize> {
    curve_schedule(50, 5, 200, 50, max)
}

/// Vendi score of the first `n` features for each `n` in `schedule`.
pub fn incremental_vendi_curve(features: &[Vec<f64>], schedule: &[usize]) -> Result<Vec<(usize, f64)>> {
    let max = schedule.iter().copied().max().unwrap_or(0);
    if max > features.len() {
        return Err(Error::usage(format!(
            "schedule reaches {max} samples but only {} are available",
            features.len()
        )));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) || schedule.first().is_some_and(|&n| n < 2) {
        return Err(Error::usage("curve schedule must be strictly increasing from at least 2"));
    }
    let unit = unit_normalize(&features[..max])?;
    let dim = unit.first().map_or(0, |u| u.len());
    let mut gram = FeatureGram::new(dim);
    let mut out = Vec::with_capacity(schedule.len());
    for &n in schedule {
        while gram.rows < n {
            gram.push(&unit[gram.rows]);
        }
        let eig = if n <= dim {
            SimilarityKernel::cosine(&unit[..n])?.normalized().eigenvalues()?
        } else {
            gram.eigenvalues()?
        };
        out.push((n, entropy_exp(&eig)?));
    }
    Ok(out)
}

pub fn write_curve_csv<W: Write>(curve: &[(usize, f64)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "n,vendi")?;
    for (n, v) in curve {
        writeln!(w, "{n},{v}")?;
    }
    Ok(())
}
