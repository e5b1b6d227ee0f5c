//! Run configuration: a flat INI dialect (`[section]`, `key = value`, `#`
//! or `;` comments) layered as built-in defaults < preset < config file <
//! command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::diffusion::{DenoiserSpec, NoiseSchedule, DEFAULT_BETA_MAX, DEFAULT_BETA_MIN, DEFAULT_STEPS};
use crate::error::{Error, Result};
use crate::experiments::data::DatasetSpec;
use crate::metrics::EmbedderTraining;
use crate::nn::{Activation, AdamWConfig};
use crate::rewards::RewardSpec;
use crate::rl::{Cluster, DynamicParams, MdpConfig, ReferenceSource, TrainConfig, WindowSchedule};

pub const PRESETS: [(&str, &str); 3] = [
    ("baseline", include_str!("../../presets/baseline.ini")),
    ("early", include_str!("../../presets/early.ini")),
    ("later", include_str!("../../presets/later.ini")),
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Ini {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut ini = Ini::default();
        let mut section = String::from("run");
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| fmt_err(origin, i, "unterminated section header"))?;
                section = name.trim().to_ascii_lowercase();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| fmt_err(origin, i, "expected `key = value`"))?;
            ini.set(&section, k.trim(), v.trim());
        }
        Ok(ini)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        self.sections
            .entry(section.to_ascii_lowercase())
            .or_default()
            .insert(key.to_ascii_lowercase(), value.to_string());
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    /// Values in `other` win.
    pub fn merge(&mut self, other: &Ini) {
        for (s, kv) in &other.sections {
            for (k, v) in kv {
                self.set(s, k, v);
            }
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (s, kv) in &self.sections {
            if kv.is_empty() {
                continue;
            }
            let _ = writeln!(out, "[{s}]");
            for (k, v) in kv {
                let _ = writeln!(out, "{k} = {v}");
            }
            out.push('\n');
        }
        out
    }

    fn keys(&self) -> impl Iterator<Item = (&str, &str)> {
        self.sections
            .iter()
            .flat_map(|(s, kv)| kv.keys().map(move |k| (s.as_str(), k.as_str())))
    }
}

fn fmt_err(origin: &Path, line: usize, reason: &str) -> Error {
    Error::Format {
        path: origin.to_path_buf(),
        reason: format!("line {}: {reason}", line + 1),
    }
}

pub fn preset_ini(name: &str) -> Result<Ini> {
    let text = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            Error::config(format!(
                "unknown preset {name:?}; expected one of baseline, early, later"
            ))
        })?;
    Ini::parse(text, Path::new(&format!("presets/{name}.ini")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Pretrain,
    Ddpo,
    Hrf,
    HrfD,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pretrain" => Ok(Method::Pretrain),
            "ddpo" => Ok(Method::Ddpo),
            "hrf" => Ok(Method::Hrf),
            "hrf-d" => Ok(Method::HrfD),
            _ => Err(Error::config(format!("unknown method {s:?}; expected pretrain, ddpo, hrf or hrf-d"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Pretrain => "pretrain",
            Method::Ddpo => "ddpo",
            Method::Hrf => "hrf",
            Method::HrfD => "hrf-d",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub optimizer: AdamWConfig,
    /// Cosine decay of the learning rate to this fraction of its start.
    pub final_lr_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InjectConfig {
    pub steps: Vec<usize>,
    pub trajectories: usize,
    pub seed: u64,
}

/// Values an invocation may force regardless of file contents.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub preset: Option<String>,
    pub method: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub method: Method,
    pub seed: u64,
    pub eval_seed: u64,
    pub out_dir: PathBuf,
    pub pretrained_dir: PathBuf,
    pub eval_samples: usize,
    pub dataset: DatasetSpec,
    pub train_samples: usize,
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub model: DenoiserSpec,
    pub pretrain: PretrainConfig,
    pub embedder: EmbedderTraining,
    pub reward: RewardSpec,
    pub preset: Option<String>,
    /// Window list as written (before any index conversion).
    pub windows_literal: Vec<(usize, usize)>,
    pub windows: WindowSchedule,
    pub dynamic: DynamicParams,
    pub ddpo_iterations: usize,
    pub train: TrainConfig,
    pub inject: InjectConfig,
    /// Fully resolved settings, as written to `config.ini`.
    pub resolved: Ini,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("run", &["name", "method", "seed", "eval_seed", "out", "pretrained", "eval_samples", "preset"]),
    ("data", &["kind", "modes", "radius", "sigma", "noise", "segments", "classes", "jitter", "train_samples"]),
    ("schedule", &["steps", "beta_min", "beta_max"]),
    ("model", &["hidden", "time_embed_dim", "activation"]),
    ("pretrain", &["steps", "batch", "learning_rate", "weight_decay", "clip_norm", "final_lr_fraction"]),
    ("embedder", &["hidden", "steps", "batch", "learning_rate"]),
    ("reward", &["kind", "normal", "offset", "quant_scale", "weights"]),
    ("windows", &["index", "clusters", "iterations"]),
    ("dynamic", &["stride", "beta", "rollouts", "iterations"]),
    (
        "finetune",
        &[
            "iterations",
            "clip_range",
            "batch_size",
            "samples_per_iteration",
            "updates_per_iteration",
            "normalize_advantages",
            "learning_rate",
            "weight_decay",
            "clip_norm",
            "references",
        ],
    ),
    ("inject", &["steps", "trajectories", "seed"]),
];

struct Reader<'a> {
    ini: &'a Ini,
    resolved: Ini,
}

impl Reader<'_> {
    fn raw(&mut self, s: &str, k: &str, default: &str) -> String {
        let v = self.ini.get(s, k).unwrap_or(default).to_string();
        self.resolved.set(s, k, &v);
        v
    }

    fn parse<T: std::str::FromStr>(&mut self, s: &str, k: &str, default: &str) -> Result<T> {
        let v = self.raw(s, k, default);
        v.parse()
            .map_err(|_| Error::config(format!("[{s}] {k} = {v:?} is not a valid value")))
    }

    fn list<T: std::str::FromStr>(&mut self, s: &str, k: &str, default: &str) -> Result<Vec<T>> {
        let v = self.raw(s, k, default);
        v.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| {
                p.parse()
                    .map_err(|_| Error::config(format!("[{s}] {k}: {p:?} is not a valid list entry")))
            })
            .collect()
    }

    fn flag(&mut self, s: &str, k: &str, default: bool) -> Result<bool> {
        let v = self.raw(s, k, if default { "true" } else { "false" });
        match v.as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(Error::config(format!("[{s}] {k} = {v:?} is not a boolean"))),
        }
    }
}

fn parse_windows(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (a, b) = p
                .split_once('-')
                .ok_or_else(|| Error::config(format!("window {p:?} must look like lo-hi")))?;
            let a = a.trim().parse().map_err(|_| Error::config(format!("bad window bound in {p:?}")))?;
            let b = b.trim().parse().map_err(|_| Error::config(format!("bad window bound in {p:?}")))?;
            Ok((a, b))
        })
        .collect()
}

pub fn format_windows(w: &[(usize, usize)]) -> String {
    w.iter().map(|(a, b)| format!("({a},{b})")).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Resolves a run configuration from an optional file plus overrides.
    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Self> {
        let user = match path {
            Some(p) => Ini::load(p)?,
            None => Ini::default(),
        };
        Self::from_layers(&user, ov)
    }

    pub fn from_layers(user: &Ini, ov: &Overrides) -> Result<Self> {
        for (s, k) in user.keys() {
            let known = KNOWN.iter().any(|(sec, keys)| *sec == s && keys.contains(&k));
            if !known {
                return Err(Error::config(format!("unknown setting [{s}] {k}")));
            }
        }
        let preset = ov.preset.clone().or_else(|| user.get("run", "preset").map(str::to_string));
        let mut merged = match &preset {
            Some(p) => preset_ini(p)?,
            None => Ini::default(),
        };
        merged.merge(user);
        if let Some(seed) = ov.seed {
            merged.set("run", "seed", &seed.to_string());
        }
        if let Some(m) = &ov.method {
            merged.set("run", "method", m);
        }
        if let Some(p) = &preset {
            merged.set("run", "preset", p);
        }
        if let Some(out) = &ov.out {
            merged.set("run", "out", &out.to_string_lossy());
        }
        Self::resolve(&merged, preset)
    }

    fn resolve(ini: &Ini, preset: Option<String>) -> Result<Self> {
        let mut r = Reader {
            ini,
            resolved: Ini::default(),
        };
        let method = Method::parse(&r.raw("run", "method", "hrf"))?;
        let seed: u64 = r.parse("run", "seed", "0")?;
        let eval_seed: u64 = r.parse("run", "eval_seed", "1000003")?;
        let name = r.raw("run", "name", "ring");
        if name.contains(',') || name.is_empty() {
            return Err(Error::config("run name must be non-empty and contain no commas"));
        }
        let pretrained = r.raw("run", "pretrained", "runs/pretrain");
        let default_out = match (&preset, method) {
            (_, Method::Pretrain) => pretrained.clone(),
            (Some(p), _) => format!("runs/{}-{p}-s{seed}", method.name()),
            (None, _) => format!("runs/{}-s{seed}", method.name()),
        };
        let out_dir = PathBuf::from(r.raw("run", "out", &default_out));
        // A pretraining run is its own artifact source.
        let pretrained_dir = if method == Method::Pretrain { out_dir.clone() } else { PathBuf::from(pretrained) };
        let eval_samples: usize = r.parse("run", "eval_samples", "2000")?;
        if eval_samples < 10 {
            return Err(Error::config("eval_samples must be at least 10"));
        }

        let kind = r.raw("data", "kind", "ring");
        let dataset = match kind.as_str() {
            "ring" => DatasetSpec::Ring {
                modes: r.parse("data", "modes", "8")?,
                radius: r.parse("data", "radius", "3")?,
                sigma: r.parse("data", "sigma", "0.15")?,
            },
            "swiss_roll" => DatasetSpec::SwissRoll {
                noise: r.parse("data", "noise", "0.05")?,
                segments: r.parse("data", "segments", "6")?,
            },
            "grid16" => DatasetSpec::Grid16 {
                classes: r.parse("data", "classes", "4")?,
                jitter: r.parse("data", "jitter", "0.25")?,
            },
            other => return Err(Error::config(format!("unknown dataset kind {other:?}"))),
        };
        dataset.validate()?;
        let train_samples: usize = r.parse("data", "train_samples", "8000")?;

        let steps: usize = r.parse("schedule", "steps", &DEFAULT_STEPS.to_string())?;
        let beta_min: f64 = r.parse("schedule", "beta_min", &DEFAULT_BETA_MIN.to_string())?;
        let beta_max: f64 = r.parse("schedule", "beta_max", &DEFAULT_BETA_MAX.to_string())?;
        NoiseSchedule::linear(steps, beta_min, beta_max)?;

        let hidden: Vec<usize> = r.list("model", "hidden", "128,128,128")?;
        let act = r.raw("model", "activation", "tanh");
        let activation = Activation::parse(&act)
            .filter(|a| *a != Activation::Softmax)
            .ok_or_else(|| Error::config(format!("unsupported hidden activation {act:?}")))?;
        let model = DenoiserSpec {
            dim: dataset.dim(),
            hidden,
            time_embed_dim: r.parse("model", "time_embed_dim", "16")?,
            activation,
        };

        let pretrain = PretrainConfig {
            steps: r.parse("pretrain", "steps", "5000")?,
            batch: r.parse("pretrain", "batch", "64")?,
            optimizer: AdamWConfig {
                learning_rate: r.parse("pretrain", "learning_rate", "2e-3")?,
                weight_decay: r.parse("pretrain", "weight_decay", "0")?,
                clip_norm: Some(r.parse("pretrain", "clip_norm", "4.5")?),
                ..Default::default()
            },
            final_lr_fraction: r.parse("pretrain", "final_lr_fraction", "0.05")?,
        };
        if pretrain.batch == 0 {
            return Err(Error::config("pretrain batch must be at least 1"));
        }

        let embedder = EmbedderTraining {
            hidden: r.list("embedder", "hidden", "32,16")?,
            steps: r.parse("embedder", "steps", "1200")?,
            batch: r.parse("embedder", "batch", "64")?,
            learning_rate: r.parse("embedder", "learning_rate", "5e-3")?,
        };

        let reward = Self::resolve_reward(&mut r, &dataset, &pretrained_dir)?;

        let index = r.raw("windows", "index", "sampling");
        let literal = parse_windows(&r.raw("windows", "clusters", "8-12, 18-22, 28-32"))?;
        let iterations: Vec<usize> = r.list("windows", "iterations", "8,8,8")?;
        let windows = match index.as_str() {
            "sampling" => WindowSchedule::from_sampling_indices(steps, &literal, &iterations)?,
            "diffusion" => {
                if literal.len() != iterations.len() {
                    return Err(Error::config("window and iteration counts differ"));
                }
                let s = WindowSchedule::Predefined(
                    literal
                        .iter()
                        .zip(&iterations)
                        .map(|(&(lo, hi), &n)| Cluster { lo, hi, iterations: n })
                        .collect(),
                );
                s.validate(steps)?;
                s
            }
            other => return Err(Error::config(format!("[windows] index must be sampling or diffusion, got {other:?}"))),
        };

        let dynamic = DynamicParams {
            stride: r.parse("dynamic", "stride", "4")?,
            beta: r.parse("dynamic", "beta", "1.0")?,
            rollouts: r.parse("dynamic", "rollouts", "4")?,
            iterations: r.parse("dynamic", "iterations", "24")?,
            ..Default::default()
        };
        WindowSchedule::Dynamic(dynamic.clone()).validate(steps)?;

        let ddpo_iterations: usize = r.parse("finetune", "iterations", "24")?;
        if ddpo_iterations == 0 {
            return Err(Error::config("[finetune] iterations must be at least 1"));
        }
        let mdp = MdpConfig {
            clip_range: r.parse("finetune", "clip_range", "1e-4")?,
            batch_size: r.parse("finetune", "batch_size", "32")?,
            samples_per_iteration: r.parse("finetune", "samples_per_iteration", "96")?,
            updates_per_iteration: r.parse("finetune", "updates_per_iteration", "1")?,
            normalize_advantages: r.flag("finetune", "normalize_advantages", true)?,
        };
        mdp.validate()?;
        let optimizer = AdamWConfig {
            learning_rate: r.parse("finetune", "learning_rate", "3e-4")?,
            weight_decay: r.parse("finetune", "weight_decay", "1e-3")?,
            clip_norm: Some(r.parse("finetune", "clip_norm", "4.5")?),
            ..Default::default()
        };
        let references = r.raw("finetune", "references", "model");
        let reference_source = match references.as_str() {
            "model" => ReferenceSource::Model,
            // Filled with held-out generator samples by the pipeline.
            "dataset" => ReferenceSource::Dataset(Vec::new()),
            other => return Err(Error::config(format!("[finetune] references must be model or dataset, got {other:?}"))),
        };

        let inject = InjectConfig {
            steps: r.list("inject", "steps", "38,35,30,25,20,10")?,
            trajectories: r.parse("inject", "trajectories", "15")?,
            seed: r.parse("inject", "seed", "424242")?,
        };
        if inject.steps.iter().any(|&s| s < 1 || s > steps) || inject.trajectories == 0 {
            return Err(Error::config(format!("injection steps must lie in [1, {steps}] with at least one trajectory")));
        }
        if let Some(p) = &preset {
            r.resolved.set("run", "preset", p);
        }

        Ok(RunConfig {
            name,
            method,
            seed,
            eval_seed,
            out_dir,
            pretrained_dir,
            eval_samples,
            dataset,
            train_samples,
            steps,
            beta_min,
            beta_max,
            model,
            pretrain,
            embedder,
            reward,
            preset,
            windows_literal: literal,
            windows,
            dynamic,
            ddpo_iterations,
            train: TrainConfig {
                mdp,
                optimizer,
                reference_source,
            },
            inject,
            resolved: r.resolved,
        })
    }

    fn resolve_reward(r: &mut Reader<'_>, dataset: &DatasetSpec, pretrained: &Path) -> Result<RewardSpec> {
        let default_kind = if dataset.grid_shape().is_some() { "dct_compress" } else { "region" };
        let kind = r.raw("reward", "kind", default_kind);
        Ok(match kind.as_str() {
            "region" => {
                // Default boundary through the origin at angle π/K, splitting
                // ring modes evenly.
                let k = dataset.num_classes().max(2) as f64;
                let a = std::f64::consts::PI / k;
                let default = if dataset.dim() == 2 {
                    format!("{},{}", a.cos(), a.sin())
                } else {
                    String::new()
                };
                let normal: Vec<f64> = r.list("reward", "normal", &default)?;
                RewardSpec::Region {
                    normal,
                    offset: r.parse("reward", "offset", "0")?,
                }
            }
            "dct_compress" | "dct_incompress" => {
                let (height, width) = dataset
                    .grid_shape()
                    .ok_or_else(|| Error::config("DCT rewards need grid-shaped data"))?;
                let quant_scale = r.parse("reward", "quant_scale", "1")?;
                if kind == "dct_compress" {
                    RewardSpec::DctCompress { height, width, quant_scale }
                } else {
                    RewardSpec::DctIncompress { height, width, quant_scale }
                }
            }
            "fixed_scorer" => {
                let default = pretrained.join("checkpoints").join("scorer.bin");
                RewardSpec::FixedScorer {
                    weights: PathBuf::from(r.raw("reward", "weights", &default.to_string_lossy())),
                }
            }
            other => return Err(Error::config(format!("unknown reward kind {other:?}"))),
        })
    }

    /// The resolved settings minus output location, rendered canonically.
    pub fn canonical(&self) -> String {
        let mut ini = self.resolved.clone();
        if let Some(run) = ini.sections.get_mut("run") {
            run.remove("out");
        }
        ini.render()
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.steps, self.beta_min, self.beta_max)
    }

    /// Window schedule the configured method trains with.
    pub fn method_schedule(&self) -> WindowSchedule {
        match self.method {
            Method::Ddpo | Method::Pretrain => WindowSchedule::full_chain(self.steps, self.ddpo_iterations),
            Method::Hrf => self.windows.clone(),
            Method::HrfD => WindowSchedule::Dynamic(self.dynamic.clone()),
        }
    }
}
