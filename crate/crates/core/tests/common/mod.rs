//! Oracles shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use std::path::Path;

use hrf_core::diffusion::{forward_noise, DenoiserModel, NoiseSchedule};
use hrf_core::experiments::{Ini, Overrides, RunConfig};
use hrf_core::nn::{Activation, Layer, ParamSet};
use hrf_core::rl::{collect_rollouts, ddpo_is_update, hrf_windowed_update, MdpConfig, StartState};
use hrf_core::seeds;
use rand::Rng;

/// Maximum relative error between backprop and central differences of
/// `L = Σ_k w_k·y_k` (fixed random `w`) over up to `coords` random
/// coordinates in every layer.
pub fn gradient_check(sizes: &[usize], acts: &[Activation], coords: usize, seed: u64) -> (f64, usize) {
    let mut rng = seeds::from_seed(seed);
    let mut params = ParamSet::random(sizes, acts, &mut rng).unwrap();
    let flat: Vec<f64> = params.flat().iter().map(|v| v + 0.1 * rng.random_range(-1.0..1.0)).collect();
    params.set_flat(&flat).unwrap();
    let input: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.5..1.5)).collect();
    let w: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |p: &ParamSet| -> f64 { p.predict(&input).unwrap().iter().zip(&w).map(|(y, w)| y * w).sum() };
    let (_, tape) = params.forward(&input).unwrap();
    let analytic = params.backward(&tape, &w).unwrap().flat();

    let mut offsets = Vec::new();
    let mut start = 0;
    for l in params.layers() {
        let n = l.weights().len() + l.bias().len();
        offsets.push((start, n));
        start += n;
    }
    let h = 1e-6;
    let (mut worst, mut checked) = (0.0f64, 0);
    for (start, n) in offsets {
        let picks: Vec<usize> = if n <= coords {
            (start..start + n).collect()
        } else {
            rand::seq::index::sample(&mut rng, n, coords).into_iter().map(|i| start + i).collect()
        };
        for i in picks {
            let mut p = params.clone();
            let mut v = flat.clone();
            v[i] += h;
            p.set_flat(&v).unwrap();
            let up = loss(&p);
            v[i] -= 2.0 * h;
            p.set_flat(&v).unwrap();
            let down = loss(&p);
            let numeric = (up - down) / (2.0 * h);
            let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    (worst, checked)
}

/// Shape list exercised by the gradient checks: every activation, wide and
/// narrow layers, and a softmax head.
pub fn gradient_shapes() -> Vec<(Vec<usize>, Vec<Activation>)> {
    use Activation::*;
    vec![
        (vec![3, 16, 4], vec![Tanh, Identity]),
        (vec![18, 32, 32, 2], vec![Tanh, Tanh, Identity]),
        (vec![5, 24, 12, 4], vec![Relu, Relu, Softmax]),
        (vec![2, 40, 1], vec![Relu, Identity]),
        (vec![7, 9, 6, 3], vec![Identity, Tanh, Softmax]),
    ]
}

/// One-step, one-dimensional model with `ε_θ(x) = b`, `β₁ = ½` and unit
/// reverse σ, so `μ = √2·x_T − b` and `∂E[x₀]/∂b = −1` exactly
/// (`∇_μ E[r] = 1` for `r(x) = x`).
pub fn one_step_model() -> DenoiserModel {
    let schedule = NoiseSchedule::from_betas(vec![0.5]).unwrap().with_reverse_sigmas(vec![1.0]).unwrap();
    let layer = Layer::new(1, 1, vec![0.0], vec![0.0], Activation::Identity).unwrap();
    DenoiserModel::new(ParamSet::new(vec![layer]).unwrap(), 1, 0, schedule).unwrap()
}

/// Estimates of `∂E[r]/∂b` from both update rules at `θ = θ_old` with `n`
/// rollouts each (un-normalized advantages).
pub fn one_step_oracle(n: usize, seed: u64) -> (f64, f64) {
    let m = one_step_model();
    let cfg = MdpConfig {
        normalize_advantages: false,
        batch_size: n,
        samples_per_iteration: n,
        ..MdpConfig::default()
    };
    let reward = |x: &[f64]| -> hrf_core::Result<f64> { Ok(x[0]) };
    let estimate = |stream: &str, windowed: bool| {
        let mut rng = seeds::stream(seed, stream);
        let starts: Vec<StartState> = (0..n)
            .map(|_| StartState {
                t: 1,
                x_t: seeds::normal_vec(&mut rng, 1),
                reference: None,
            })
            .collect();
        let batch = collect_rollouts(&m, &starts, &reward, &cfg, &mut rng).unwrap();
        let out = if windowed {
            hrf_windowed_update(&m, &m, &batch, cfg.clip_range).unwrap()
        } else {
            ddpo_is_update(&m, &m, &batch, cfg.clip_range).unwrap()
        };
        out.grads.mean().flat()[1]
    };
    (estimate("ddpo", false), estimate("hrf", true))
}

/// Per-coordinate z-scores of the empirical mean and variance of
/// `q(x_t | x₀)` against `√ᾱ_t·x₀` and `1 − ᾱ_t`.
pub fn forward_moment_z(schedule: &NoiseSchedule, x0: &[f64], t: usize, n: usize, seed: u64) -> (f64, f64) {
    let mut rng = seeds::from_seed(seed);
    let d = x0.len();
    let ab = schedule.alpha_bar(t);
    let (mut s1, mut s2, mut s4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mean: Vec<f64> = x0.iter().map(|v| ab.sqrt() * v).collect();
    for _ in 0..n {
        let eps = seeds::normal_vec(&mut rng, d);
        let x = forward_noise(schedule, x0, t, &eps).unwrap();
        for k in 0..d {
            let c = x[k] - mean[k];
            s1[k] += c;
            s2[k] += c * c;
            s4[k] += c.powi(4);
        }
    }
    let var = 1.0 - ab;
    let nf = n as f64;
    let (mut zm, mut zv) = (0.0f64, 0.0f64);
    for k in 0..d {
        let m = s1[k] / nf;
        zm = zm.max(m.abs() / (var / nf).sqrt());
        let v = s2[k] / nf;
        // Var of a squared centred draw is m₄ − σ⁴.
        let se_v = ((s4[k] / nf - v * v) / nf).sqrt();
        zv = zv.max((v - var).abs() / se_v);
    }
    (zm, zv)
}

/// Reduced-budget ring run configuration writing under `root`.
pub fn small_config(root: &Path, method: &str, seed: u64, extra: &str) -> RunConfig {
    let text = format!(
        "[run]\npretrained = {pre}\nout = {out}\neval_samples = 300\n\
         [data]\ntrain_samples = 2000\n\
         [model]\nhidden = 32, 32\n\
         [pretrain]\nsteps = 400\nbatch = 32\n\
         [embedder]\nsteps = 300\n\
         [finetune]\niterations = 4\nbatch_size = 8\nsamples_per_iteration = 16\n\
         [windows]\nclusters = 8-12, 28-32\niterations = 2, 2\n\
         [dynamic]\niterations = 2\nrollouts = 2\nstride = 8\n\
         [inject]\ntrajectories = 3\n{extra}",
        pre = root.join("pretrain").display(),
        out = if method == "pretrain" { root.join("pretrain") } else { root.join(format!("{method}-{seed}")) }.display(),
    );
    let ini = Ini::parse(&text, Path::new("small.ini")).unwrap();
    RunConfig::from_layers(
        &ini,
        &Overrides {
            seed: Some(seed),
            method: Some(method.into()),
            ..Default::default()
        },
    )
    .unwrap()
}

/// Eigenvalue entropy of the normalized cosine kernel via nalgebra.
pub fn reference_vendi(features: &[Vec<f64>]) -> f64 {
    let n = features.len();
    let unit: Vec<Vec<f64>> = features
        .iter()
        .map(|f| {
            let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            f.iter().map(|v| v / norm).collect()
        })
        .collect();
    let k = nalgebra::DMatrix::from_fn(n, n, |i, j| unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum::<f64>() / n as f64);
    let eig = k.symmetric_eigen().eigenvalues;
    let h: f64 = eig.iter().filter(|&&l| l > 0.0).map(|&l| -l * l.ln()).sum();
    h.exp()
}
