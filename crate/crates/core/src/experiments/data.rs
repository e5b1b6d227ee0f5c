//! Toy data generators.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::seeds;

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    /// `modes` isotropic Gaussians equally spaced on a circle.
    Ring { modes: usize, radius: f64, sigma: f64 },
    /// 2-D spiral; `segments` pseudo-classes along the arc feed the embedder.
    SwissRoll { noise: f64, segments: usize },
    /// 16×16 band-limited textures; each class fixes a base set of
    /// low-frequency DCT coefficients.
    Grid16 { classes: usize, jitter: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Vec<f64>>,
    /// Generator labels (`None` for the swiss roll).
    pub labels: Option<Vec<usize>>,
    /// Classes used to train the embedder: the labels, or arc segments.
    pub classes: Vec<usize>,
}

pub const GRID_SIDE: usize = 16;
/// Coefficients `(u, v)` with `u, v < GRID_BAND` carry texture energy.
const GRID_BAND: usize = 4;

impl DatasetSpec {
    pub fn ring8() -> Self {
        DatasetSpec::Ring {
            modes: 8,
            radius: 3.0,
            sigma: 0.15,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            DatasetSpec::Ring { .. } => "ring",
            DatasetSpec::SwissRoll { .. } => "swiss_roll",
            DatasetSpec::Grid16 { .. } => "grid16",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DatasetSpec::Grid16 { .. } => GRID_SIDE * GRID_SIDE,
            _ => 2,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            DatasetSpec::Ring { modes, .. } => *modes,
            DatasetSpec::SwissRoll { segments, .. } => *segments,
            DatasetSpec::Grid16 { classes, .. } => *classes,
        }
    }

    pub fn grid_shape(&self) -> Option<(usize, usize)> {
        matches!(self, DatasetSpec::Grid16 { .. }).then_some((GRID_SIDE, GRID_SIDE))
    }

    /// Mode centers, for the ring only.
    pub fn centers(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            DatasetSpec::Ring { modes, radius, .. } => Some(
                (0..*modes)
                    .map(|k| {
                        let a = 2.0 * PI * k as f64 / *modes as f64;
                        vec![radius * a.cos(), radius * a.sin()]
                    })
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Nearest-center assignment radius (three component deviations).
    pub fn coverage_radius(&self) -> Option<f64> {
        match self {
            DatasetSpec::Ring { sigma, .. } => Some(3.0 * sigma),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            DatasetSpec::Ring { modes, radius, sigma } => {
                *modes >= 2 && radius.is_finite() && *radius > 0.0 && sigma.is_finite() && *sigma >= 0.0
            }
            DatasetSpec::SwissRoll { noise, segments } => noise.is_finite() && *noise >= 0.0 && *segments >= 2,
            DatasetSpec::Grid16 { classes, jitter } => {
                (2..=64).contains(classes) && jitter.is_finite() && *jitter >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid {} dataset parameters: {self:?}", self.kind())))
        }
    }
}

fn dct16_basis() -> Vec<[f64; GRID_SIDE]> {
    let n = GRID_SIDE as f64;
    (0..GRID_BAND)
        .map(|u| {
            let c = if u == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            std::array::from_fn(|x| c * ((2 * x + 1) as f64 * u as f64 * PI / (2.0 * n)).cos())
        })
        .collect()
}

/// Inverse low-band 2-D DCT of `coeffs[v][u]`, shifted to mid-grey.
fn texture(coeffs: &[[f64; GRID_BAND]; GRID_BAND], basis: &[[f64; GRID_SIDE]]) -> Vec<f64> {
    let mut img = vec![0.5; GRID_SIDE * GRID_SIDE];
    for y in 0..GRID_SIDE {
        for x in 0..GRID_SIDE {
            let mut v = 0.0;
            for (cv, row) in coeffs.iter().enumerate() {
                for (cu, c) in row.iter().enumerate() {
                    v += c * basis[cv][y] * basis[cu][x];
                }
            }
            img[y * GRID_SIDE + x] = (0.5 + v).clamp(0.0, 1.0);
        }
    }
    img
}

/// Per-class base coefficients; fixed, independent of the sampling seed.
fn grid_class_coeffs(classes: usize) -> Vec<[[f64; GRID_BAND]; GRID_BAND]> {
    (0..classes)
        .map(|k| {
            let mut rng = seeds::stream(k as u64, "grid16-class");
            std::array::from_fn(|v| {
                std::array::from_fn(|u| if u + v == 0 { 0.0 } else { 1.6 * rng.random_range(-1.0..1.0) })
            })
        })
        .collect()
}

pub fn generate_dataset<R: Rng + ?Sized>(spec: &DatasetSpec, n: usize, rng: &mut R) -> Result<Dataset> {
    spec.validate()?;
    match spec {
        DatasetSpec::Ring { modes, sigma, .. } => {
            let centers = spec.centers().expect("ring has centers");
            let mut samples = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let k = rng.random_range(0..*modes);
                let e = seeds::normal_vec(rng, 2);
                samples.push(vec![centers[k][0] + sigma * e[0], centers[k][1] + sigma * e[1]]);
                labels.push(k);
            }
            Ok(Dataset {
                samples,
                classes: labels.clone(),
                labels: Some(labels),
            })
        }
        DatasetSpec::SwissRoll { noise, segments } => {
            let mut samples = Vec::with_capacity(n);
            let mut classes = Vec::with_capacity(n);
            for _ in 0..n {
                let u: f64 = rng.random();
                let theta = 1.5 * PI * (1.0 + 2.0 * u);
                let e = seeds::normal_vec(rng, 2);
                // Scaled so the roll spans roughly [−3, 3]².
                samples.push(vec![
                    theta * theta.cos() / 5.0 + noise * e[0],
                    theta * theta.sin() / 5.0 + noise * e[1],
                ]);
                classes.push(((u * *segments as f64) as usize).min(segments - 1));
            }
            Ok(Dataset {
                samples,
                labels: None,
                classes,
            })
        }
        DatasetSpec::Grid16 { classes, jitter } => {
            let basis = dct16_basis();
            let bases = grid_class_coeffs(*classes);
            let mut samples = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let k = rng.random_range(0..*classes);
                let mut c = bases[k];
                for row in c.iter_mut() {
                    for v in row.iter_mut() {
                        *v += jitter * rng.random_range(-1.0..1.0);
                    }
                }
                samples.push(texture(&c, &basis));
                labels.push(k);
            }
            Ok(Dataset {
                samples,
                classes: labels.clone(),
                labels: Some(labels),
            })
        }
    }
}

/// Pearson chi-square statistic of `counts` against a uniform expectation.
pub fn chi_square_uniform(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_counts_are_uniform() {
        let d = generate_dataset(&DatasetSpec::ring8(), 8000, &mut seeds::from_seed(1)).unwrap();
        let mut counts = [0usize; 8];
        d.labels.as_ref().unwrap().iter().for_each(|&l| counts[l] += 1);
        // 7 degrees of freedom, p = 0.01 critical value.
        assert!(chi_square_uniform(&counts) < 18.475, "{counts:?}");
    }

    #[test]
    fn zero_sigma_ring_sits_on_centers() {
        let spec = DatasetSpec::Ring {
            modes: 5,
            radius: 2.0,
            sigma: 0.0,
        };
        let d = generate_dataset(&spec, 50, &mut seeds::from_seed(2)).unwrap();
        let centers = spec.centers().unwrap();
        for (x, &l) in d.samples.iter().zip(d.labels.as_ref().unwrap()) {
            assert_eq!(x, &centers[l]);
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        for spec in [
            DatasetSpec::ring8(),
            DatasetSpec::SwissRoll {
                noise: 0.05,
                segments: 6,
            },
            DatasetSpec::Grid16 {
                classes: 4,
                jitter: 0.2,
            },
        ] {
            let a = generate_dataset(&spec, 40, &mut seeds::from_seed(7)).unwrap();
            let b = generate_dataset(&spec, 40, &mut seeds::from_seed(7)).unwrap();
            assert_eq!(a, b);
            assert!(a.samples.iter().all(|s| s.len() == spec.dim()));
            assert!(a.classes.iter().all(|&c| c < spec.num_classes()));
        }
    }

    #[test]
    fn swiss_roll_has_no_labels_and_grid_is_in_range() {
        let d = generate_dataset(
            &DatasetSpec::SwissRoll {
                noise: 0.0,
                segments: 4,
            },
            10,
            &mut seeds::from_seed(3),
        )
        .unwrap();
        assert!(d.labels.is_none());
        let g = generate_dataset(
            &DatasetSpec::Grid16 {
                classes: 3,
                jitter: 0.3,
            },
            10,
            &mut seeds::from_seed(3),
        )
        .unwrap();
        assert!(g.samples.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = DatasetSpec::Ring {
            modes: 1,
            radius: 3.0,
            sigma: 0.1,
        };
        assert!(generate_dataset(&bad, 10, &mut seeds::from_seed(0)).is_err());
    }
}
