//! Scalar rewards on final samples.
//!
//! A reward sees only x₀: [`RewardFn::reward`] takes the clean sample and
//! nothing else, so no reward can depend on the interior of a trajectory.

pub mod dct;
mod scorer;

use std::path::PathBuf;

use crate::error::{Error, Result};

pub use dct::dct_size_proxy;
pub use scorer::{FixedScorer, ScorerTraining};

pub trait RewardFn {
    fn reward(&self, x0: &[f64]) -> Result<f64>;
}

impl<F: Fn(&[f64]) -> Result<f64>> RewardFn for F {
    fn reward(&self, x0: &[f64]) -> Result<f64> {
        self(x0)
    }
}

/// `sigmoid(normal · x₀ − offset)`: bounded, smooth, favouring one
/// half-plane.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionReward {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl RegionReward {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !offset.is_finite() || normal.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("region reward needs a finite nonzero normal and finite offset"));
        }
        Ok(RegionReward { normal, offset })
    }
}

pub fn region_reward(x0: &[f64], normal: &[f64], offset: f64) -> f64 {
    let z: f64 = x0.iter().zip(normal).map(|(a, b)| a * b).sum::<f64>() - offset;
    1.0 / (1.0 + (-z).exp())
}

impl RewardFn for RegionReward {
    fn reward(&self, x0: &[f64]) -> Result<f64> {
        if x0.len() != self.normal.len() {
            return Err(Error::Reward(format!(
                "sample dimension {} does not match reward normal {}",
                x0.len(),
                self.normal.len()
            )));
        }
        Ok(region_reward(x0, &self.normal, self.offset))
    }
}

/// Minus (compress) or plus (incompress) the DCT code-length estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct DctReward {
    pub height: usize,
    pub width: usize,
    pub quant_scale: f64,
    pub incompress: bool,
}

impl RewardFn for DctReward {
    fn reward(&self, x0: &[f64]) -> Result<f64> {
        let bits = dct_size_proxy(x0, self.height, self.width, self.quant_scale)
            .map_err(|e| Error::Reward(e.to_string()))?;
        Ok(if self.incompress { bits } else { -bits })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RewardSpec {
    Region { normal: Vec<f64>, offset: f64 },
    DctCompress { height: usize, width: usize, quant_scale: f64 },
    DctIncompress { height: usize, width: usize, quant_scale: f64 },
    FixedScorer { weights: PathBuf },
}

impl RewardSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            RewardSpec::Region { .. } => "region",
            RewardSpec::DctCompress { .. } => "dct_compress",
            RewardSpec::DctIncompress { .. } => "dct_incompress",
            RewardSpec::FixedScorer { .. } => "fixed_scorer",
        }
    }

    /// Instantiates the reward for samples of dimension `dim`.
    pub fn build(&self, dim: usize) -> Result<Box<dyn RewardFn>> {
        match self {
            RewardSpec::Region { normal, offset } => {
                if normal.len() != dim {
                    return Err(Error::config(format!(
                        "region normal has {} components, data dimension is {dim}",
                        normal.len()
                    )));
                }
                Ok(Box::new(RegionReward::new(normal.clone(), *offset)?))
            }
            RewardSpec::DctCompress { height, width, quant_scale }
            | RewardSpec::DctIncompress { height, width, quant_scale } => {
                if height * width != dim || height % 8 != 0 || width % 8 != 0 {
                    return Err(Error::config(format!(
                        "DCT rewards need grid data with sides divisible by 8; got {height}x{width} for dimension {dim}"
                    )));
                }
                if !(*quant_scale > 0.0) {
                    return Err(Error::config("quantization scale must be positive"));
                }
                Ok(Box::new(DctReward {
                    height: *height,
                    width: *width,
                    quant_scale: *quant_scale,
                    incompress: matches!(self, RewardSpec::DctIncompress { .. }),
                }))
            }
            RewardSpec::FixedScorer { weights } => {
                let scorer = FixedScorer::load(weights)?;
                if scorer.input_dim() != dim {
                    return Err(Error::config(format!(
                        "scorer expects dimension {}, data dimension is {dim}",
                        scorer.input_dim()
                    )));
                }
                Ok(Box::new(scorer))
            }
        }
    }
}
