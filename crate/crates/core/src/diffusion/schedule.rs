use crate::error::{Error, Result};

pub const DEFAULT_STEPS: usize = 40;
/// With 40 steps these put ᾱ_T at about 0.004.
pub const DEFAULT_BETA_MIN: f64 = 1e-3;
pub const DEFAULT_BETA_MAX: f64 = 0.25;

/// Per-step coefficients of the forward and reverse kernels, indexed by
/// diffusion time `t ∈ 1..=T` (T is the noisiest step).
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    sigmas: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear β from `beta_min` to `beta_max`, reverse std σ_t = √β_t.
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::config(format!("schedule needs at least 2 steps, got {steps}")));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::config(format!(
                "need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}"
            )));
        }
        let betas = (0..steps)
            .map(|i| beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64)
            .collect();
        Self::from_betas(betas)
    }

    pub fn default_linear() -> Self {
        Self::linear(DEFAULT_STEPS, DEFAULT_BETA_MIN, DEFAULT_BETA_MAX)
            .expect("default schedule is valid")
    }

    /// Arbitrary β sequence (any length ≥ 1), σ_t = √β_t.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() || betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::config("every beta must lie in (0, 1)"));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        let sigmas = betas.iter().map(|b| b.sqrt()).collect();
        Ok(NoiseSchedule {
            betas,
            alphas,
            alpha_bars,
            sigmas,
        })
    }

    /// Replaces the reverse-kernel standard deviations. Zero is allowed and
    /// makes that step deterministic.
    pub fn with_reverse_sigmas(mut self, sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.len() != self.steps() || sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::config("need one finite non-negative sigma per step"));
        }
        self.sigmas = sigmas;
        Ok(self)
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn idx(&self, t: usize) -> usize {
        assert!(
            (1..=self.steps()).contains(&t),
            "step {t} outside 1..={}",
            self.steps()
        );
        t - 1
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if (1..=self.steps()).contains(&t) {
            Ok(())
        } else {
            Err(Error::usage(format!("step {t} outside 1..={}", self.steps())))
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[self.idx(t)]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[self.idx(t)]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[self.idx(t)]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[self.idx(t)]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_ends_near_isotropic() {
        let s = NoiseSchedule::default_linear();
        assert_eq!(s.steps(), 40);
        let direct: f64 = s.betas().iter().map(|b| 1.0 - b).product();
        assert!((s.alpha_bar(40) - direct).abs() < 1e-15);
        assert!(s.alpha_bar(40) < 0.05, "{}", s.alpha_bar(40));
        assert!(s.betas().windows(2).all(|w| w[0] <= w[1]));
        assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
        assert!((1..=40).all(|t| s.sigma(t) > 0.0));
    }

    #[test]
    fn narrow_beta_range_does_not_reach_noise_in_forty_steps() {
        // The classic 1000-step range leaves most of the signal at T = 40.
        let s = NoiseSchedule::linear(40, 1e-4, 0.02).unwrap();
        let direct: f64 = s.betas().iter().map(|b| 1.0 - b).product();
        assert!((s.alpha_bar(40) - direct).abs() < 1e-15);
        assert!((s.alpha_bar(40) - 0.6671).abs() < 1e-3);
    }

    #[test]
    fn two_step_hand_product() {
        let s = NoiseSchedule::linear(2, 0.5, 0.5).unwrap();
        assert_eq!(s.alpha_bar(1), 0.5);
        assert_eq!(s.alpha_bar(2), 0.25);
        assert_eq!(s.sigma(2), 0.5f64.sqrt());
    }

    #[test]
    fn invalid_ranges_rejected() {
        assert!(NoiseSchedule::linear(40, 0.02, 1e-4).is_err());
        assert!(NoiseSchedule::linear(1, 0.1, 0.1).is_err());
        assert!(NoiseSchedule::linear(10, 0.0, 0.1).is_err());
        assert!(NoiseSchedule::linear(10, 0.1, 1.0).is_err());
    }
}
