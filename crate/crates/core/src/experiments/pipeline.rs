//! Pipeline stages: pretrain → fine-tune → evaluate, each reading and
//! writing a run directory.
//!
//! ```text
//! manifest.txt  config.ini
//! checkpoints/  denoiser.bin embedder.bin scorer.bin | finetune_iterNNN.bin final.bin
//! logs/         pretrain.csv | train.csv selection.csv
//! metrics/      report.csv vendi_curve.csv
//! samples/      samples.csv sheet.pgm (grid data only)
//! inject/       curves.csv
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::diffusion::{ddpm_loss_step, sample_from_noise, DenoiserModel};
use crate::error::{Error, Result};
use crate::experiments::config::{format_windows, Method, RunConfig};
use crate::experiments::data::{generate_dataset, Dataset, GRID_SIDE};
use crate::experiments::inject::{injection_experiment, write_injection_csv, InjectionPlan, InjectionRow};
use crate::metrics::{
    default_curve_schedule, incremental_vendi_curve, inception_style_score, label_coverage, mean_and_se,
    mode_coverage, vendi_from_features, write_curve_csv, Embedder, MetricsReport,
};
use crate::nn::{checkpoint, OptimizerState};
use crate::rewards::{FixedScorer, RewardFn, ScorerTraining};
use crate::rl::{hierarchical_train, CheckpointSink, ReferenceSource, TrainingLog, WindowSchedule};
use crate::seeds;

pub const DENOISER_FILE: &str = "checkpoints/denoiser.bin";
pub const EMBEDDER_FILE: &str = "checkpoints/embedder.bin";
pub const SCORER_FILE: &str = "checkpoints/scorer.bin";
pub const FINAL_FILE: &str = "checkpoints/final.bin";
pub const REPORT_FILE: &str = "metrics/report.csv";
pub const CURVE_FILE: &str = "metrics/vendi_curve.csv";
pub const SAMPLES_FILE: &str = "samples/samples.csv";
pub const INJECT_FILE: &str = "inject/curves.csv";

pub(crate) fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

pub(crate) fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
{
    let mut w = create_file(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Fails with the missing path if a stage dependency is absent.
pub(crate) fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Missing(path.to_path_buf()))
    }
}

/// Records `config.ini` and merges `files` into `manifest.txt`.
pub(crate) fn write_manifest(cfg: &RunConfig, dir: &Path, stage: &str, files: &[&str]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let hash = cfg.hash();
    let path = dir.join("manifest.txt");
    let mut entries: Vec<String> = match fs::read_to_string(&path) {
        Ok(text) => text
            .lines()
            .filter(|l| l.starts_with("file="))
            .filter(|l| {
                let name = l.split_whitespace().next().unwrap_or("").trim_start_matches("file=");
                !files.contains(&name)
            })
            .map(str::to_string)
            .collect(),
        Err(_) => Vec::new(),
    };
    for f in files {
        entries.push(format!("file={f} stage={stage} config_hash={hash} seed={}", cfg.seed));
    }
    let mut out = String::new();
    let _ = writeln!(out, "config_hash={hash}");
    let _ = writeln!(out, "seed={}", cfg.seed);
    let _ = writeln!(out, "eval_seed={}", cfg.eval_seed);
    let _ = writeln!(out, "method={}", cfg.method.name());
    let _ = writeln!(out, "preset={}", cfg.preset.as_deref().unwrap_or("none"));
    let _ = writeln!(out, "task={}", cfg.name);
    let _ = writeln!(out, "version={}", env!("CARGO_PKG_VERSION"));
    match cfg.method_schedule() {
        _ if cfg.method == Method::Pretrain => {}
        WindowSchedule::Predefined(clusters) => {
            if cfg.method == Method::Hrf {
                let _ = writeln!(out, "clusters={}", format_windows(&cfg.windows_literal));
            }
            let t: Vec<(usize, usize)> = clusters.iter().map(|c| (c.lo, c.hi)).collect();
            let its: Vec<String> = clusters.iter().map(|c| c.iterations.to_string()).collect();
            let _ = writeln!(out, "clusters_t={}", format_windows(&t));
            let _ = writeln!(out, "cluster_iterations={}", its.join(","));
        }
        WindowSchedule::Dynamic(p) => {
            let _ = writeln!(out, "windows=dynamic stride={} beta={} rollouts={} iterations={}", p.stride, p.beta, p.rollouts, p.iterations);
        }
    }
    for e in entries {
        let _ = writeln!(out, "{e}");
    }
    fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
    let ini = dir.join("config.ini");
    fs::write(&ini, cfg.canonical()).map_err(|e| Error::io(&ini, e))
}

pub fn training_data(cfg: &RunConfig) -> Result<Dataset> {
    generate_dataset(&cfg.dataset, cfg.train_samples, &mut seeds::stream(cfg.seed, "data"))
}

pub fn load_model(cfg: &RunConfig, path: &Path) -> Result<DenoiserModel> {
    require(path)?;
    DenoiserModel::new(checkpoint::load(path)?, cfg.model.dim, cfg.model.time_embed_dim, cfg.schedule()?)
}

pub fn load_embedder(cfg: &RunConfig) -> Result<Embedder> {
    let path = cfg.pretrained_dir.join(EMBEDDER_FILE);
    require(&path)?;
    let e = Embedder::load(&path)?;
    if e.input_dim() != cfg.model.dim || e.classes() != cfg.dataset.num_classes() {
        return Err(Error::config(format!("embedder {} does not match the configured dataset", path.display())));
    }
    Ok(e)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainSummary {
    pub final_loss: f64,
    pub embedder_accuracy: f64,
}

/// Pseudo-aesthetic target in [1, 10]: high near the data, decaying with
/// distance to the nearest of a fixed anchor set.
fn scorer_targets<R: Rng + ?Sized>(data: &[Vec<f64>], n: usize, rng: &mut R) -> (Vec<Vec<f64>>, Vec<f64>) {
    let anchors: Vec<&Vec<f64>> = data.iter().take(500).collect();
    let dim = data[0].len();
    let spread = {
        let mut mean = vec![0.0; dim];
        for x in data {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / data.len() as f64;
            }
        }
        let var: f64 = data
            .iter()
            .map(|x| x.iter().zip(&mean).map(|(v, m)| (v - m) * (v - m)).sum::<f64>())
            .sum::<f64>()
            / data.len() as f64;
        (var / dim as f64).sqrt()
    };
    let mut inputs = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n);
    for _ in 0..n {
        let base = &data[rng.random_range(0..data.len())];
        let s = spread * rng.random_range(0.0..1.0);
        let e = seeds::normal_vec(rng, dim);
        let x: Vec<f64> = base.iter().zip(&e).map(|(b, e)| b + s * e).collect();
        let d = anchors
            .iter()
            .map(|a| a.iter().zip(&x).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        inputs.push(x);
        dists.push(d);
    }
    let scale = (dists.iter().sum::<f64>() / n as f64).max(1e-12);
    let targets = dists.iter().map(|d| 1.0 + 9.0 * (-d / scale).exp()).collect();
    (inputs, targets)
}

/// Trains the base denoiser, the evaluation embedder and the fixed scorer.
pub fn pretrain(cfg: &RunConfig) -> Result<PretrainSummary> {
    let dir = &cfg.out_dir;
    let data = training_data(cfg)?;
    let mut rng = seeds::stream(cfg.seed, "pretrain");
    let mut model = DenoiserModel::random(&cfg.model, cfg.schedule()?, &mut rng)?;
    let mut opt = OptimizerState::new(&model.params, cfg.pretrain.optimizer.clone());
    let lr0 = cfg.pretrain.optimizer.learning_rate;
    let f = cfg.pretrain.final_lr_fraction;
    let mut log = String::from("step,loss,learning_rate\n");
    let mut batch = Vec::with_capacity(cfg.pretrain.batch);
    let (mut window, mut final_loss) = (Vec::new(), f64::NAN);
    for step in 0..cfg.pretrain.steps {
        let progress = step as f64 / cfg.pretrain.steps as f64;
        opt.config.learning_rate = lr0 * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()));
        batch.clear();
        for _ in 0..cfg.pretrain.batch {
            batch.push(data.samples[rng.random_range(0..data.samples.len())].clone());
        }
        let (loss, grads) = ddpm_loss_step(&model, &batch, &mut rng)?;
        opt.step(&mut model.params, &grads)?;
        window.push(loss);
        if window.len() == 100 || step + 1 == cfg.pretrain.steps {
            final_loss = window.iter().sum::<f64>() / window.len() as f64;
            let _ = writeln!(log, "{},{final_loss},{}", step + 1, opt.config.learning_rate);
            window.clear();
        }
    }
    checkpoint::save(&model.params, &dir.join(DENOISER_FILE))?;
    let log_path = dir.join("logs/pretrain.csv");
    write_with(&log_path, |w| w.write_all(log.as_bytes()))?;

    let mut erng = seeds::stream(cfg.seed, "embedder");
    let embedder = Embedder::train(&data.samples, &data.classes, cfg.dataset.num_classes(), &cfg.embedder, &mut erng)?;
    let embedder_accuracy = embedder.accuracy(&data.samples, &data.classes)?;
    embedder.save(&dir.join(EMBEDDER_FILE))?;

    let mut srng = seeds::stream(cfg.seed, "scorer");
    let (inputs, targets) = scorer_targets(&data.samples, 4000, &mut srng);
    FixedScorer::train(&inputs, &targets, &ScorerTraining::default(), &mut srng)?.save(&dir.join(SCORER_FILE))?;

    write_manifest(cfg, dir, "pretrain", &[DENOISER_FILE, EMBEDDER_FILE, SCORER_FILE, "logs/pretrain.csv"])?;
    Ok(PretrainSummary {
        final_loss,
        embedder_accuracy,
    })
}

/// Fine-tunes the pretrained denoiser with the configured method.
pub fn finetune(cfg: &RunConfig) -> Result<TrainingLog> {
    if cfg.method == Method::Pretrain {
        return Err(Error::config("fine-tuning needs method ddpo, hrf or hrf-d"));
    }
    let dir = &cfg.out_dir;
    let mut model = load_model(cfg, &cfg.pretrained_dir.join(DENOISER_FILE))?;
    let reward = cfg.reward.build(cfg.model.dim)?;
    let embedder = load_embedder(cfg)?;
    let embed = |x: &[f64]| embedder.embed(x);
    let mut train = cfg.train.clone();
    if let ReferenceSource::Dataset(_) = train.reference_source {
        let held = generate_dataset(&cfg.dataset, 2000, &mut seeds::stream(cfg.seed, "references"))?;
        train.reference_source = ReferenceSource::Dataset(held.samples);
    }
    let schedule = cfg.method_schedule();
    let sink = CheckpointSink::new(dir.join("checkpoints"), cfg.hash(), cfg.seed, "finetune");
    let mut rng = seeds::stream(cfg.seed, "rollout");
    let log = hierarchical_train(&mut model, &schedule, reward.as_ref(), &train, Some(&embed), Some(&sink), &mut rng)?;
    checkpoint::save(&model.params, &dir.join(FINAL_FILE))?;
    write_with(&dir.join("logs/train.csv"), |w| log.write_csv(w))?;
    let mut files = vec![FINAL_FILE, "logs/train.csv", "checkpoints/finetune_manifest.txt"];
    if !log.selections.is_empty() {
        write_with(&dir.join("logs/selection.csv"), |w| log.write_selection_csv(w))?;
        files.push("logs/selection.csv");
    }
    write_manifest(cfg, dir, "finetune", &files)?;
    Ok(log)
}

/// Model the evaluation stage scores: the base model for `pretrain`, the
/// fine-tuned one otherwise.
pub fn evaluated_model(cfg: &RunConfig) -> Result<DenoiserModel> {
    match cfg.method {
        Method::Pretrain => load_model(cfg, &cfg.pretrained_dir.join(DENOISER_FILE)),
        _ => load_model(cfg, &cfg.out_dir.join(FINAL_FILE)),
    }
}

/// Per-sample generation seeds. Shared by every method evaluated with the
/// same `eval_seed`, so all sample sets start from the same initial noise.
pub fn eval_seeds(eval_seed: u64, n: usize) -> Vec<u64> {
    let mut rng = seeds::stream(eval_seed, "eval");
    (0..n).map(|_| rng.random()).collect()
}

pub fn generate_samples(model: &DenoiserModel, eval_seed: u64, n: usize) -> Result<Vec<Vec<f64>>> {
    eval_seeds(eval_seed, n)
        .into_iter()
        .map(|s| sample_from_noise(model, s).map(|t| t.x0))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub covered: usize,
    pub histogram: Vec<usize>,
    pub curve: Vec<(usize, f64)>,
}

pub fn run_id(cfg: &RunConfig) -> String {
    match &cfg.preset {
        Some(p) if cfg.method == Method::Hrf => format!("{}-{p}-s{}", cfg.method.name(), cfg.seed),
        _ => format!("{}-s{}", cfg.method.name(), cfg.seed),
    }
}

/// Scores a sample set. Fails if the score bounds `1 ≤ IS ≤ K` and
/// `1 ≤ VS ≤ n` are violated.
pub fn score_samples(cfg: &RunConfig, samples: &[Vec<f64>], reward: &dyn RewardFn, embedder: &Embedder) -> Result<Evaluation> {
    let n = samples.len();
    let k = cfg.dataset.num_classes();
    let rewards = samples
        .iter()
        .map(|x| reward.reward(x).map_err(|e| Error::Reward(e.to_string())))
        .collect::<Result<Vec<f64>>>()?;
    let (mean_reward, se_reward) = mean_and_se(&rewards);
    let features = samples.iter().map(|x| embedder.embed(x)).collect::<Result<Vec<_>>>()?;
    let vendi_raw = vendi_from_features(samples)?;
    let vendi_embed = vendi_from_features(&features)?;
    let is_score = inception_style_score(samples, embedder)?;
    let (covered, histogram) = match (cfg.dataset.centers(), cfg.dataset.coverage_radius()) {
        (Some(c), Some(r)) => mode_coverage(samples, &c, r),
        _ => {
            let labels = samples.iter().map(|x| embedder.classify(x)).collect::<Result<Vec<_>>>()?;
            label_coverage(&labels, k)
        }
    };
    const SLACK: f64 = 1e-9;
    if !(1.0 - SLACK..=k as f64 + SLACK).contains(&is_score) {
        return Err(Error::numeric(format!("inception-style score {is_score} outside [1, {k}]")));
    }
    for (name, vs) in [("raw", vendi_raw), ("embedding", vendi_embed)] {
        if !(1.0 - SLACK..=n as f64 + SLACK).contains(&vs) {
            return Err(Error::numeric(format!("{name} Vendi score {vs} outside [1, {n}]")));
        }
    }
    let curve = incremental_vendi_curve(&features, &default_curve_schedule(n))?;
    Ok(Evaluation {
        report: MetricsReport {
            run_id: run_id(cfg),
            task: cfg.name.clone(),
            mean_reward,
            se_reward,
            vendi_raw,
            vendi_embed,
            is_score,
            mode_coverage: covered as f64 / k as f64,
        },
        covered,
        histogram,
        curve,
    })
}

fn write_samples_csv(path: &Path, samples: &[Vec<f64>]) -> Result<()> {
    write_with(path, |w| {
        let dim = samples.first().map_or(0, Vec::len);
        let header: Vec<String> = (0..dim).map(|k| format!("x{k}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for s in samples {
            let row: Vec<String> = s.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    })
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    require(path)?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.split(',')
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format {
                    path: path.to_path_buf(),
                    reason: format!("row {}: {e}", i + 1),
                })
        })
        .collect()
}

/// Binary PGM mosaic of up to 64 grid samples, 8 per row.
pub fn write_pgm_sheet(path: &Path, samples: &[Vec<f64>]) -> Result<()> {
    let tiles = samples.len().min(64);
    let cols = tiles.clamp(1, 8);
    let rows = tiles.div_ceil(cols).max(1);
    let (w, h) = (cols * GRID_SIDE, rows * GRID_SIDE);
    let mut pixels = vec![0u8; w * h];
    for (i, s) in samples.iter().take(tiles).enumerate() {
        let (ty, tx) = (i / cols, i % cols);
        for y in 0..GRID_SIDE {
            for x in 0..GRID_SIDE {
                let v = s[y * GRID_SIDE + x].clamp(0.0, 1.0);
                pixels[(ty * GRID_SIDE + y) * w + tx * GRID_SIDE + x] = (v * 255.0).round() as u8;
            }
        }
    }
    write_with(path, |f| {
        write!(f, "P5\n{w} {h}\n255\n")?;
        f.write_all(&pixels)
    })
}

/// Generates the evaluation set and writes metrics and samples.
pub fn evaluate(cfg: &RunConfig) -> Result<Evaluation> {
    let dir = &cfg.out_dir;
    let model = evaluated_model(cfg)?;
    let reward = cfg.reward.build(cfg.model.dim)?;
    let embedder = load_embedder(cfg)?;
    let samples = generate_samples(&model, cfg.eval_seed, cfg.eval_samples)?;
    let eval = score_samples(cfg, &samples, reward.as_ref(), &embedder)?;
    write_with(&dir.join(REPORT_FILE), |w| MetricsReport::write_csv(std::slice::from_ref(&eval.report), w))?;
    write_with(&dir.join(CURVE_FILE), |w| write_curve_csv(&eval.curve, w))?;
    write_samples_csv(&dir.join(SAMPLES_FILE), &samples)?;
    let mut files = vec![REPORT_FILE, CURVE_FILE, SAMPLES_FILE];
    if cfg.dataset.grid_shape().is_some() {
        write_pgm_sheet(&dir.join("samples/sheet.pgm"), &samples)?;
        files.push("samples/sheet.pgm");
    }
    write_manifest(cfg, dir, "eval", &files)?;
    Ok(eval)
}

/// Recomputes the embedding Vendi curve from a run's stored samples.
pub fn vendi_curve(cfg: &RunConfig) -> Result<Vec<(usize, f64)>> {
    let samples = read_samples_csv(&cfg.out_dir.join(SAMPLES_FILE))?;
    let embedder = load_embedder(cfg)?;
    let features = samples.iter().map(|x| embedder.embed(x)).collect::<Result<Vec<_>>>()?;
    let curve = incremental_vendi_curve(&features, &default_curve_schedule(samples.len()))?;
    write_with(&cfg.out_dir.join(CURVE_FILE), |w| write_curve_csv(&curve, w))?;
    write_manifest(cfg, &cfg.out_dir, "vendi-curve", &[CURVE_FILE])?;
    Ok(curve)
}

/// Injection diagnostic for a fine-tuned run against its base model.
pub fn inject(cfg: &RunConfig) -> Result<Vec<InjectionRow>> {
    let finetuned = load_model(cfg, &cfg.out_dir.join(FINAL_FILE))?;
    let base = load_model(cfg, &cfg.pretrained_dir.join(DENOISER_FILE))?;
    let embedder = load_embedder(cfg)?;
    let plan = InjectionPlan::new(&finetuned, &base, cfg.inject.steps.clone(), cfg.inject.trajectories, cfg.inject.seed);
    let rows = injection_experiment(&plan, &|x: &[f64]| embedder.embed(x))?;
    write_with(&cfg.out_dir.join(INJECT_FILE), |w| write_injection_csv(&rows, w))?;
    write_manifest(cfg, &cfg.out_dir, "inject", &[INJECT_FILE])?;
    Ok(rows)
}
