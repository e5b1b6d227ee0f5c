//! Injection sampling: run the fine-tuned model down to step `s`, then hand
//! the chain to the base model, and track how far the one-shot x₀
//! predictions drift from the pure fine-tuned run.

use std::io::Write;

use crate::diffusion::{predict_x0, sample_trajectory, DenoiserModel, EpsModel, Switched, Trajectory};
use crate::error::{Error, Result};
use crate::metrics::mean_and_se;
use crate::rl::cosine_distance;
use crate::seeds;

pub const INJECT_HEADER: &str = "injection_step,t,mean_distance,se,raw_mean_distance,base_vs_finetuned";

#[derive(Clone, Debug)]
pub struct InjectionPlan<'a> {
    pub finetuned: &'a DenoiserModel,
    pub base: &'a DenoiserModel,
    pub steps: Vec<usize>,
    /// One trajectory per seed; the same seed drives every variant.
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InjectionRow {
    pub injection_step: usize,
    pub t: usize,
    pub mean_distance: f64,
    pub se: f64,
    pub raw_mean_distance: f64,
    pub base_vs_finetuned: f64,
}

impl<'a> InjectionPlan<'a> {
    pub fn new(finetuned: &'a DenoiserModel, base: &'a DenoiserModel, steps: Vec<usize>, trajectories: usize, seed: u64) -> Self {
        let mut rng = seeds::stream(seed, "inject");
        let seeds = (0..trajectories).map(|_| rand::Rng::random(&mut rng)).collect();
        InjectionPlan {
            finetuned,
            base,
            steps,
            seeds,
        }
    }

    fn validate(&self) -> Result<()> {
        let (f, b) = (self.finetuned, self.base);
        if f.params.sizes() != b.params.sizes() || f.time_embed_dim() != b.time_embed_dim() {
            return Err(Error::config("fine-tuned and base checkpoints have different shapes"));
        }
        if f.schedule() != b.schedule() {
            return Err(Error::config("fine-tuned and base models use different noise schedules"));
        }
        let steps = f.schedule().steps();
        if self.seeds.is_empty() {
            return Err(Error::config("injection needs at least one trajectory"));
        }
        if let Some(s) = self.steps.iter().find(|&&s| s < 1 || s > steps) {
            return Err(Error::config(format!("injection step {s} outside [1, {steps}]")));
        }
        Ok(())
    }
}

/// `x̃_{t→0}` at every state of the chain, ordered `t = T, …, 1, 0`
/// (at `t = 0` the sample itself). Each prediction uses the model that
/// takes the step from that state.
fn denoised_path(model: &impl EpsModel, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(traj.steps.len() + 1);
    for s in &traj.steps {
        out.push(predict_x0(model, &s.x_t, s.t)?);
    }
    out.push(traj.x0.clone());
    Ok(out)
}

fn run(model: &impl EpsModel, seed: u64) -> Result<Vec<Vec<f64>>> {
    let steps = model.schedule().steps();
    let x_t = seeds::normal_vec(&mut seeds::stream(seed, "x_T"), model.dim());
    denoised_path(model, &sample_trajectory(model, steps, &x_t, seed)?)
}

/// Rows for every injection step and every `t` from `T` down to 0.
/// `embed` maps a sample into the space the main distance is measured in;
/// the raw-space distance is logged alongside.
pub fn injection_experiment(plan: &InjectionPlan<'_>, embed: &dyn Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Vec<InjectionRow>> {
    plan.validate()?;
    let steps = plan.finetuned.schedule().steps();
    let dist = |a: &[f64], b: &[f64]| -> Result<(f64, f64)> { Ok((cosine_distance(&embed(a)?, &embed(b)?)?, cosine_distance(a, b)?)) };

    let pure: Vec<Vec<Vec<f64>>> = plan.seeds.iter().map(|&s| run(plan.finetuned, s)).collect::<Result<_>>()?;
    let base: Vec<Vec<Vec<f64>>> = plan.seeds.iter().map(|&s| run(plan.base, s)).collect::<Result<_>>()?;
    let mut base_curve = vec![0.0; steps + 1];
    for (p, b) in pure.iter().zip(&base) {
        for (i, slot) in base_curve.iter_mut().enumerate() {
            *slot += dist(&p[i], &b[i])?.0 / plan.seeds.len() as f64;
        }
    }

    let mut rows = Vec::with_capacity(plan.steps.len() * (steps + 1));
    for &s in &plan.steps {
        let switched = Switched {
            upper: plan.finetuned,
            lower: plan.base,
            switch_at: s,
        };
        let mut emb = vec![Vec::with_capacity(plan.seeds.len()); steps + 1];
        let mut raw = vec![0.0; steps + 1];
        for (k, &seed) in plan.seeds.iter().enumerate() {
            let injected = run(&switched, seed)?;
            for i in 0..=steps {
                let (e, r) = dist(&pure[k][i], &injected[i])?;
                emb[i].push(e);
                raw[i] += r / plan.seeds.len() as f64;
            }
        }
        for i in 0..=steps {
            let (mean_distance, se) = mean_and_se(&emb[i]);
            rows.push(InjectionRow {
                injection_step: s,
                t: steps - i,
                mean_distance,
                se: if se.is_nan() { 0.0 } else { se },
                raw_mean_distance: raw[i],
                base_vs_finetuned: base_curve[i],
            });
        }
    }
    Ok(rows)
}

pub fn write_injection_csv<W: Write>(rows: &[InjectionRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{INJECT_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.injection_step, r.t, r.mean_distance, r.se, r.raw_mean_distance, r.base_vs_finetuned
        )?;
    }
    Ok(())
}

/// Mean final-sample (`t = 0`) distance per injection step, in plan order.
pub fn final_distances(rows: &[InjectionRow]) -> Vec<(usize, f64)> {
    rows.iter().filter(|r| r.t == 0).map(|r| (r.injection_step, r.mean_distance)).collect()
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{DenoiserSpec, NoiseSchedule};

    fn models() -> (DenoiserModel, DenoiserModel) {
        let spec = DenoiserSpec {
            hidden: vec![8],
            time_embed_dim: 4,
            ..DenoiserSpec::new(2)
        };
        let s = NoiseSchedule::linear(10, 1e-2, 0.3).unwrap();
        (
            DenoiserModel::random(&spec, s.clone(), &mut seeds::from_seed(1)).unwrap(),
            DenoiserModel::random(&spec, s, &mut seeds::from_seed(2)).unwrap(),
        )
    }

    fn id(x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }

    #[test]
    fn boundary_injection_steps() {
        let (f, b) = models();
        let plan = InjectionPlan::new(&f, &b, vec![10, 1], 4, 3);
        let rows = injection_experiment(&plan, &id).unwrap();
        assert_eq!(rows.len(), 2 * 11);
        assert_eq!(rows[0].t, 10);
        assert_eq!(rows[10].t, 0);
        // Injecting at T is the pure base run.
        for r in &rows[..11] {
            assert!((r.mean_distance - r.base_vs_finetuned).abs() < 1e-12, "{r:?}");
        }
        // Injecting at 1 only changes the last step (and its x₀ prediction).
        for r in &rows[11..20] {
            assert!(r.mean_distance.abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn spearman_matches_hand_values() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        // Ranks (1,2,3,4) vs (2,1,4,3): 1 − 6·4/(4·15) = 0.6.
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_steps() {
        let (f, b) = models();
        let plan = InjectionPlan::new(&f, &b, vec![11], 2, 0);
        assert!(injection_experiment(&plan, &id).unwrap_err().is_config());
    }
}
