use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::diffusion::{DenoiserModel, EpsModel};
use crate::error::{Error, Result};
use crate::nn::{checkpoint, AdamWConfig, OptimizerState};
use crate::rewards::RewardFn;
use crate::rl::start::ReferenceSource;
use crate::rl::update::hrf_windowed_update;
use crate::rl::window::{select_initial_steps, DynamicSelectionReport, Selection, WindowSchedule, SELECTION_HEADER};
use crate::rl::{collect_rollouts, MdpConfig, RolloutBatch};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub mdp: MdpConfig,
    pub optimizer: AdamWConfig,
    pub reference_source: ReferenceSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mdp: MdpConfig::default(),
            optimizer: AdamWConfig::default(),
            reference_source: ReferenceSource::Model,
        }
    }
}

pub const LOG_HEADER: &str = "iter,window_lo,window_hi,mean_reward,std_reward,mean_ratio,clip_fraction,grad_norm";

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    /// Smallest and largest start step used this iteration.
    pub window_lo: usize,
    pub window_hi: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
    /// `(iteration, batch, report)` for dynamically selected windows.
    pub selections: Vec<(usize, usize, DynamicSelectionReport)>,
}

impl TrainingLog {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{LOG_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.iter, r.window_lo, r.window_hi, r.mean_reward, r.std_reward, r.mean_ratio, r.clip_fraction, r.grad_norm
            )?;
        }
        Ok(())
    }

    pub fn write_selection_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iter,batch,{SELECTION_HEADER}")?;
        for (iter, batch, report) in &self.selections {
            for row in report.csv_rows() {
                writeln!(w, "{iter},{batch},{row}")?;
            }
        }
        Ok(())
    }
}

/// Writes one checkpoint per iteration plus a manifest naming each file's
/// config hash, seed and iteration.
#[derive(Clone, Debug)]
pub struct CheckpointSink {
    pub dir: PathBuf,
    pub config_hash: String,
    pub seed: u64,
    pub prefix: String,
}

impl CheckpointSink {
    pub fn new(dir: impl Into<PathBuf>, config_hash: impl Into<String>, seed: u64, prefix: impl Into<String>) -> Self {
        CheckpointSink {
            dir: dir.into(),
            config_hash: config_hash.into(),
            seed,
            prefix: prefix.into(),
        }
    }

    pub fn path_for(&self, iter: usize) -> PathBuf {
        self.dir.join(format!("{}_iter{:03}.bin", self.prefix, iter))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join(format!("{}_manifest.txt", self.prefix))
    }

    fn record(&self, iter: usize, model: &DenoiserModel, manifest: &mut String) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.path_for(iter);
        checkpoint::save(&model.params, &path)?;
        let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let _ = writeln!(
            manifest,
            "iteration={iter} file={name} config_hash={} seed={}",
            self.config_hash, self.seed
        );
        let mpath = self.manifest_path();
        std::fs::write(&mpath, manifest.as_bytes()).map_err(|e| Error::io(&mpath, e))
    }
}

pub fn latest_checkpoint(sink: &CheckpointSink, iterations: usize) -> Option<PathBuf> {
    (1..=iterations).rev().map(|i| sink.path_for(i)).find(|p| Path::new(p).exists())
}

fn population_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

type EmbedFn<'a> = &'a dyn Fn(&[f64]) -> Result<Vec<f64>>;

/// Hierarchical fine-tuning loop.
///
/// Each outer iteration snapshots θ_old, then for each of `num_batches`
/// batches selects start steps (active cluster, or dynamic selection for a
/// fresh reference), re-noises the reference, and rolls out `batch_size`
/// trajectories under θ_old. The collected batches are then replayed
/// `updates_per_iteration` times, one optimizer step each. A schedule with
/// the single window `(T, T)` is plain whole-chain fine-tuning.
///
/// On a numeric failure the parameters are restored to the start of the
/// failing iteration, whose checkpoint (if any) is already on disk.
#[allow(clippy::too_many_arguments)]
pub fn hierarchical_train<R: Rng + ?Sized>(
    model: &mut DenoiserModel,
    schedule: &WindowSchedule,
    reward_fn: &dyn RewardFn,
    cfg: &TrainConfig,
    embed_fn: Option<EmbedFn<'_>>,
    sink: Option<&CheckpointSink>,
    rng: &mut R,
) -> Result<TrainingLog> {
    let steps = model.schedule().steps();
    schedule.validate(steps)?;
    cfg.mdp.validate()?;
    let mut opt = OptimizerState::new(&model.params, cfg.optimizer.clone());
    let mut log = TrainingLog::default();
    let mut manifest = String::new();
    for iter in 0..schedule.total_iterations() {
        let old = model.clone();
        let mut batches: Vec<RolloutBatch> = Vec::with_capacity(cfg.mdp.num_batches());
        let (mut lo, mut hi) = (usize::MAX, 0);
        for b in 0..cfg.mdp.num_batches() {
            let selection = match schedule {
                WindowSchedule::Predefined(_) => Selection::Cluster(schedule.cluster_at(iter).expect("iteration in range")),
                WindowSchedule::Dynamic(params) => Selection::Dynamic {
                    params,
                    reward_fn,
                    embed_fn: embed_fn.ok_or_else(|| Error::config("dynamic window selection needs an embedder"))?,
                },
            };
            let init = select_initial_steps(&old, &selection, cfg.mdp.batch_size, &cfg.reference_source, rng)?;
            for &t in &init.steps {
                lo = lo.min(t);
                hi = hi.max(t);
            }
            if let Some(report) = init.report {
                log.selections.push((iter, b, report));
            }
            batches.push(collect_rollouts(&old, &init.states, reward_fn, &cfg.mdp, rng)?);
        }

        let good = model.params.clone();
        let (mut ratio_sum, mut clip_sum, mut transitions, mut norm_sum, mut n_steps) = (0.0, 0.0, 0usize, 0.0, 0usize);
        let outcome: Result<()> = (|| {
            for _ in 0..cfg.mdp.updates_per_iteration {
                for batch in &batches {
                    let out = hrf_windowed_update(model, &old, batch, cfg.mdp.clip_range)?;
                    let mut descent = out.grads;
                    descent.scale(-1.0);
                    let info = opt.step(&mut model.params, &descent)?;
                    ratio_sum += out.mean_ratio * out.transitions as f64;
                    clip_sum += out.clip_fraction * out.transitions as f64;
                    transitions += out.transitions;
                    norm_sum += info.grad_norm;
                    n_steps += 1;
                }
            }
            Ok(())
        })();
        if let Err(e) = outcome {
            model.params.set_flat(&good.flat())?;
            return Err(e);
        }

        let rewards: Vec<f64> = batches.iter().flat_map(|b| b.rewards()).collect();
        let (mean_reward, std_reward) = population_stats(&rewards);
        log.rows.push(LogRow {
            iter: iter + 1,
            window_lo: lo,
            window_hi: hi,
            mean_reward,
            std_reward,
            mean_ratio: ratio_sum / transitions.max(1) as f64,
            clip_fraction: clip_sum / transitions.max(1) as f64,
            grad_norm: norm_sum / n_steps.max(1) as f64,
        });
        if let Some(sink) = sink {
            sink.record(iter + 1, model, &mut manifest)?;
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{DenoiserSpec, NoiseSchedule};
    use crate::rl::window::{Cluster, DynamicParams};
    use crate::seeds;

    fn model() -> DenoiserModel {
        let spec = DenoiserSpec {
            hidden: vec![12],
            time_embed_dim: 4,
            ..DenoiserSpec::new(2)
        };
        DenoiserModel::random(&spec, NoiseSchedule::linear(10, 1e-2, 0.35).unwrap(), &mut seeds::from_seed(21)).unwrap()
    }

    fn cfg(lr: f64) -> TrainConfig {
        TrainConfig {
            mdp: MdpConfig {
                batch_size: 4,
                samples_per_iteration: 8,
                clip_range: 0.2,
                ..Default::default()
            },
            optimizer: AdamWConfig {
                learning_rate: lr,
                ..Default::default()
            },
            reference_source: ReferenceSource::Model,
        }
    }

    fn reward(x: &[f64]) -> Result<f64> {
        Ok(1.0 / (1.0 + (-x[0]).exp()))
    }

    #[test]
    fn cluster_schedule_runs_exact_iteration_count_in_order() {
        let mut m = model();
        let s = WindowSchedule::Predefined(vec![
            Cluster { lo: 7, hi: 8, iterations: 2 },
            Cluster { lo: 4, hi: 5, iterations: 1 },
            Cluster { lo: 1, hi: 2, iterations: 2 },
        ]);
        let log = hierarchical_train(&mut m, &s, &reward, &cfg(1e-3), None, None, &mut seeds::from_seed(1)).unwrap();
        assert_eq!(log.rows.len(), 5);
        let windows: Vec<(usize, usize)> = log.rows.iter().map(|r| (r.window_lo, r.window_hi)).collect();
        for (i, (lo, hi)) in windows.iter().enumerate() {
            let expected = [(7, 8), (7, 8), (4, 5), (1, 2), (1, 2)][i];
            assert!(*lo >= expected.0 && *hi <= expected.1);
        }
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 6);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut m = model();
        let before = m.params.flat();
        let s = WindowSchedule::full_chain(10, 3);
        let log = hierarchical_train(&mut m, &s, &reward, &cfg(0.0), None, None, &mut seeds::from_seed(2)).unwrap();
        assert_eq!(m.params.flat(), before);
        assert!(log.rows.iter().all(|r| (r.mean_ratio - 1.0).abs() < 1e-12 && r.clip_fraction == 0.0));
    }

    #[test]
    fn full_window_matches_itself_and_is_deterministic() {
        let s = WindowSchedule::full_chain(10, 2);
        let run = || {
            let mut m = model();
            let log = hierarchical_train(&mut m, &s, &reward, &cfg(1e-3), None, None, &mut seeds::from_seed(3)).unwrap();
            (log, m.params.flat())
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        assert!(a.rows.iter().all(|r| r.window_lo == 10 && r.window_hi == 10));
    }

    #[test]
    fn dynamic_mode_logs_selections_and_needs_embedder() {
        let mut m = model();
        let s = WindowSchedule::Dynamic(DynamicParams {
            iterations: 2,
            rollouts: 2,
            ..Default::default()
        });
        assert!(hierarchical_train(&mut m, &s, &reward, &cfg(1e-3), None, None, &mut seeds::from_seed(4)).is_err());
        let embed = |x: &[f64]| -> Result<Vec<f64>> { Ok(vec![x[0], x[1], 1.0]) };
        let log = hierarchical_train(&mut m, &s, &reward, &cfg(1e-3), Some(&embed), None, &mut seeds::from_seed(4)).unwrap();
        assert_eq!(log.selections.len(), 4);
        for (row, chunk) in log.rows.iter().zip(log.selections.chunks(2)) {
            let chosen: Vec<usize> = chunk.iter().map(|(_, _, r)| r.chosen).collect();
            assert_eq!(row.window_lo, *chosen.iter().min().unwrap());
            assert_eq!(row.window_hi, *chosen.iter().max().unwrap());
        }
    }

    #[test]
    fn checkpoints_and_manifest_per_iteration() {
        let dir = tempfile::tempdir().unwrap();
        let sink = CheckpointSink::new(dir.path(), "abc123", 9, "hrf");
        let mut m = model();
        let s = WindowSchedule::full_chain(10, 2);
        hierarchical_train(&mut m, &s, &reward, &cfg(1e-3), None, Some(&sink), &mut seeds::from_seed(5)).unwrap();
        let last = checkpoint::load(&sink.path_for(2)).unwrap();
        assert_eq!(last, m.params);
        assert_eq!(latest_checkpoint(&sink, 2), Some(sink.path_for(2)));
        let manifest = std::fs::read_to_string(sink.manifest_path()).unwrap();
        assert_eq!(manifest.lines().count(), 2);
        assert!(manifest.contains("iteration=2 file=hrf_iter002.bin config_hash=abc123 seed=9"));
    }
}
