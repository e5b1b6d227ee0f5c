use std::io::Write;

use rand::Rng;

use crate::diffusion::{predict_x0, sample_trajectory, DenoiserModel, EpsModel};
use crate::error::{Error, Result};
use crate::rewards::RewardFn;
use crate::rl::start::{renoise, NoiseHook, ReferenceSource, StartState};

/// Inclusive interval of diffusion steps `lo..=hi` with its iteration count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cluster {
    pub lo: usize,
    pub hi: usize,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceMetric {
    Cosine,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicParams {
    pub stride: usize,
    /// Weight of the distance penalty.
    pub beta: f64,
    /// Rollouts per candidate step.
    pub rollouts: usize,
    pub iterations: usize,
    pub metric: DistanceMetric,
}

impl Default for DynamicParams {
    fn default() -> Self {
        DynamicParams {
            stride: 4,
            beta: 1.0,
            rollouts: 4,
            iterations: 24,
            metric: DistanceMetric::Cosine,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum WindowSchedule {
    /// Clusters visited in order, each for its iteration count.
    Predefined(Vec<Cluster>),
    Dynamic(DynamicParams),
}

impl WindowSchedule {
    /// Single window at `T`: every rollout starts from pure noise.
    pub fn full_chain(steps: usize, iterations: usize) -> Self {
        WindowSchedule::Predefined(vec![Cluster {
            lo: steps,
            hi: steps,
            iterations,
        }])
    }

    /// Converts windows given in sampling-step indices (0 = noisiest) to
    /// diffusion time via `t = T − index`, keeping the listed order.
    pub fn from_sampling_indices(steps: usize, windows: &[(usize, usize)], iterations: &[usize]) -> Result<Self> {
        if windows.len() != iterations.len() {
            return Err(Error::config(format!(
                "{} windows but {} iteration counts",
                windows.len(),
                iterations.len()
            )));
        }
        let mut clusters = Vec::with_capacity(windows.len());
        for (&(a, b), &n) in windows.iter().zip(iterations) {
            if a > b || b >= steps {
                return Err(Error::config(format!("window ({a}, {b}) is invalid for {steps} steps")));
            }
            clusters.push(Cluster {
                lo: steps - b,
                hi: steps - a,
                iterations: n,
            });
        }
        let s = WindowSchedule::Predefined(clusters);
        s.validate(steps)?;
        Ok(s)
    }

    pub fn validate(&self, steps: usize) -> Result<()> {
        match self {
            WindowSchedule::Predefined(clusters) => {
                if clusters.is_empty() {
                    return Err(Error::config("window schedule has no clusters"));
                }
                for c in clusters {
                    if c.lo < 1 || c.lo > c.hi || c.hi > steps {
                        return Err(Error::config(format!(
                            "cluster ({}, {}) must satisfy 1 <= lo <= hi <= {steps}",
                            c.lo, c.hi
                        )));
                    }
                    if c.iterations == 0 {
                        return Err(Error::config("cluster iteration counts must be at least 1"));
                    }
                }
            }
            WindowSchedule::Dynamic(p) => {
                if !(p.beta >= 0.0) || !p.beta.is_finite() {
                    return Err(Error::config("beta must be finite and non-negative"));
                }
                if p.stride == 0 || p.rollouts == 0 || p.iterations == 0 {
                    return Err(Error::config("stride, rollouts and iterations must be at least 1"));
                }
                if steps < 2 {
                    return Err(Error::config("dynamic selection needs at least two steps"));
                }
            }
        }
        Ok(())
    }

    pub fn total_iterations(&self) -> usize {
        match self {
            WindowSchedule::Predefined(c) => c.iter().map(|c| c.iterations).sum(),
            WindowSchedule::Dynamic(p) => p.iterations,
        }
    }

    /// Active cluster at outer iteration `iter` (predefined mode only).
    pub fn cluster_at(&self, iter: usize) -> Option<Cluster> {
        let WindowSchedule::Predefined(clusters) = self else {
            return None;
        };
        let mut left = iter;
        for c in clusters {
            if left < c.iterations {
                return Some(*c);
            }
            left -= c.iterations;
        }
        None
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            WindowSchedule::Predefined(_) => "predefined",
            WindowSchedule::Dynamic(_) => "dynamic",
        }
    }
}

/// `n` steps drawn uniformly from the integers `lo..=hi`.
pub fn draw_cluster_steps<R: Rng + ?Sized>(cluster: Cluster, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if cluster.lo > cluster.hi || cluster.lo == 0 {
        return Err(Error::config(format!("empty cluster ({}, {})", cluster.lo, cluster.hi)));
    }
    Ok((0..n).map(|_| rng.random_range(cluster.lo..=cluster.hi)).collect())
}

/// Strided candidate set `1, 1+stride, …` within `[1, T−1]`.
pub fn candidate_steps(steps: usize, stride: usize) -> Vec<usize> {
    (1..steps).step_by(stride.max(1)).collect()
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(na > 0.0 && nb > 0.0) || a.len() != b.len() {
        return Err(Error::numeric("cosine distance needs equal-length nonzero vectors"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(1.0 - dot / (na * nb))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateRecord {
    pub t: usize,
    pub reward: f64,
    /// Reward at the next grid step (T for the top candidate).
    pub next_reward: f64,
    pub diff: f64,
    pub distance: f64,
    pub objective: f64,
    pub chosen: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicSelectionReport {
    pub records: Vec<CandidateRecord>,
    pub chosen: usize,
}

pub const SELECTION_HEADER: &str = "t,R,diff,D,objective,chosen";

impl DynamicSelectionReport {
    pub fn csv_rows(&self) -> Vec<String> {
        self.records
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{}",
                    r.t,
                    r.reward,
                    r.diff,
                    r.distance,
                    r.objective,
                    u8::from(r.chosen)
                )
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{SELECTION_HEADER}")?;
        for row in self.csv_rows() {
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// Scores `(R_t − R_next) − β·D` for each candidate and marks the argmax,
/// breaking ties toward the larger `t`.
pub fn choose_from_table(
    steps: &[usize],
    rewards: &[f64],
    next_rewards: &[f64],
    distances: &[f64],
    beta: f64,
) -> Result<DynamicSelectionReport> {
    let n = steps.len();
    if n == 0 || rewards.len() != n || next_rewards.len() != n || distances.len() != n {
        return Err(Error::usage("selection table columns must be non-empty and equal length"));
    }
    let mut records: Vec<CandidateRecord> = (0..n)
        .map(|i| {
            let diff = rewards[i] - next_rewards[i];
            CandidateRecord {
                t: steps[i],
                reward: rewards[i],
                next_reward: next_rewards[i],
                diff,
                distance: distances[i],
                objective: diff - beta * distances[i],
                chosen: false,
            }
        })
        .collect();
    let mut best = 0;
    for i in 1..n {
        let (o, b) = (records[i].objective, records[best].objective);
        if o > b || (o == b && records[i].t > records[best].t) {
            best = i;
        }
    }
    if !records[best].objective.is_finite() {
        return Err(Error::numeric("selection objective is not finite"));
    }
    records[best].chosen = true;
    let chosen = records[best].t;
    Ok(DynamicSelectionReport { records, chosen })
}

type EmbedFn<'a> = &'a dyn Fn(&[f64]) -> Result<Vec<f64>>;

/// Picks the window start for one reference: for every candidate `t`,
/// `m` independent re-noisings are fully denoised to estimate `R_t`, and
/// the one-shot `x̃_{t→0}` of each re-noised state is compared to the
/// reference in embedding space. The top candidate's successor is `T`,
/// whose starts are pure noise.
#[allow(clippy::too_many_arguments)]
pub fn dynamic_window_select<R: Rng + ?Sized>(
    model: &DenoiserModel,
    reference: &[f64],
    candidates: &[usize],
    beta: f64,
    rollouts: usize,
    reward_fn: &dyn RewardFn,
    embed_fn: EmbedFn<'_>,
    rng: &mut R,
) -> Result<DynamicSelectionReport> {
    let schedule = model.schedule();
    let steps = schedule.steps();
    if rollouts == 0 {
        return Err(Error::usage("dynamic selection needs at least one rollout per candidate"));
    }
    if !(beta >= 0.0) {
        return Err(Error::config("beta must be non-negative"));
    }
    if candidates.is_empty()
        || candidates.windows(2).any(|w| w[1] <= w[0])
        || candidates[0] < 1
        || *candidates.last().unwrap() >= steps
    {
        return Err(Error::usage(format!(
            "candidates must be strictly increasing within [1, {}]",
            steps - 1
        )));
    }
    let ref_embed = embed_fn(reference).map_err(|e| Error::numeric(format!("embedding failed: {e}")))?;
    let mut rewards = Vec::with_capacity(candidates.len());
    let mut distances = Vec::with_capacity(candidates.len());
    let eval_reward = |t: usize, x_t: &[f64], rng: &mut R| -> Result<f64> {
        let traj = sample_trajectory(model, t, x_t, rng.random())?;
        reward_fn.reward(&traj.x0)
    };
    for &t in candidates {
        let (mut r_sum, mut d_sum) = (0.0, 0.0);
        for _ in 0..rollouts {
            let x_t = renoise(schedule, reference, t, NoiseHook::Sampled, rng)?;
            let x_hat = predict_x0(model, &x_t, t)?;
            let e = embed_fn(&x_hat).map_err(|e| Error::numeric(format!("embedding failed: {e}")))?;
            d_sum += cosine_distance(&ref_embed, &e)?;
            r_sum += eval_reward(t, &x_t, rng)?;
        }
        rewards.push(r_sum / rollouts as f64);
        distances.push(d_sum / rollouts as f64);
    }
    let mut r_top = 0.0;
    for _ in 0..rollouts {
        let x_t = renoise(schedule, reference, steps, NoiseHook::Sampled, rng)?;
        r_top += eval_reward(steps, &x_t, rng)?;
    }
    let r_top = r_top / rollouts as f64;
    let next: Vec<f64> = (0..candidates.len())
        .map(|i| rewards.get(i + 1).copied().unwrap_or(r_top))
        .collect();
    choose_from_table(candidates, &rewards, &next, &distances, beta)
}

pub enum Selection<'a> {
    Cluster(Cluster),
    Dynamic {
        params: &'a DynamicParams,
        reward_fn: &'a dyn RewardFn,
        embed_fn: EmbedFn<'a>,
    },
}

#[derive(Clone, Debug)]
pub struct InitialSteps {
    pub steps: Vec<usize>,
    pub states: Vec<StartState>,
    pub reference: Option<Vec<f64>>,
    pub report: Option<DynamicSelectionReport>,
}

/// Start steps and states for one batch. A cluster draws each step
/// uniformly; dynamic mode selects one step for the batch's reference. All
/// re-noisings in a batch share that reference.
pub fn select_initial_steps<R: Rng + ?Sized>(
    model: &DenoiserModel,
    selection: &Selection<'_>,
    batch_size: usize,
    source: &ReferenceSource,
    rng: &mut R,
) -> Result<InitialSteps> {
    let schedule = model.schedule();
    let t_max = schedule.steps();
    let (steps, reference, report) = match selection {
        Selection::Cluster(c) => {
            let steps = draw_cluster_steps(*c, batch_size, rng)?;
            let reference = if steps.iter().any(|&t| t < t_max) {
                Some(source.draw(model, rng)?)
            } else {
                None
            };
            (steps, reference, None)
        }
        Selection::Dynamic {
            params,
            reward_fn,
            embed_fn,
        } => {
            let reference = source.draw(model, rng)?;
            let candidates = candidate_steps(t_max, params.stride);
            let report = dynamic_window_select(
                model,
                &reference,
                &candidates,
                params.beta,
                params.rollouts,
                *reward_fn,
                *embed_fn,
                rng,
            )?;
            (vec![report.chosen; batch_size], Some(reference), Some(report))
        }
    };
    let mut states = Vec::with_capacity(steps.len());
    for &t in &steps {
        let x_t = match &reference {
            Some(r) if t < t_max => renoise(schedule, r, t, NoiseHook::Sampled, rng)?,
            _ => renoise(schedule, &vec![0.0; model.dim()], t_max, NoiseHook::Sampled, rng)?,
        };
        states.push(StartState {
            t,
            x_t,
            reference: if t < t_max { Some(0) } else { None },
        });
    }
    Ok(InitialSteps {
        steps,
        states,
        reference,
        report,
    })
}
