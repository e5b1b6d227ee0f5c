//! Acceptance harness: one PASS/FAIL line per criterion, non-zero exit if
//! any criterion fails. Runs the full-budget ring pipeline in a temporary
//! directory (a few minutes on one core).

mod common;

use std::fs;
use std::path::Path;
use std::time::Instant;

use hrf_core::diffusion::{DenoiserModel, DenoiserSpec, NoiseSchedule};
use hrf_core::experiments::{self, spearman, Evaluation, Ini, Overrides, RunConfig};
use hrf_core::metrics::vendi_from_features;
use hrf_core::rewards::RegionReward;
use hrf_core::rl::{collect_rollouts, ddpo_is_update, hrf_windowed_update, make_start_states, MdpConfig, NoiseHook};
use hrf_core::seeds;
use rand::Rng;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(results: &mut Vec<Outcome>, id: u32, name: &'static str, pass: bool, detail: String, started: Instant) {
    println!(
        "{} criterion {id:>2} {name}: {detail} [{:.1}s]",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    results.push(Outcome { id, name, pass, detail });
}

fn config(root: &Path, method: &str, seed: u64, preset: Option<&str>, out: &str) -> RunConfig {
    let text = format!("[run]\npretrained = {}\nout = {}\n", root.join("pretrain").display(), root.join(out).display());
    let ini = Ini::parse(&text, Path::new("acceptance.ini")).unwrap();
    RunConfig::from_layers(
        &ini,
        &Overrides {
            seed: Some(seed),
            method: Some(method.into()),
            preset: preset.map(str::to_string),
            ..Default::default()
        },
    )
    .unwrap()
}

fn bounds_ok(e: &Evaluation, k: f64, n: f64) -> bool {
    let r = &e.report;
    (1.0..=k).contains(&r.is_score) && (1.0..=n).contains(&r.vendi_embed) && (1.0..=n).contains(&r.vendi_raw)
}

fn main() {
    let mut results = Vec::new();

    // 1. Gradient correctness.
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut least = usize::MAX;
    for (k, (sizes, acts)) in common::gradient_shapes().into_iter().enumerate() {
        let (err, checked) = common::gradient_check(&sizes, &acts, 100, 100 + k as u64);
        worst = worst.max(err);
        least = least.min(checked);
    }
    let pass = worst < 1e-4 && least >= 100 && t.elapsed().as_secs() < 60;
    report(&mut results, 1, "gradient check", pass, format!("max rel err {worst:.2e}, ≥{least} coords per shape"), t);

    // 2. One-step policy-gradient oracle.
    let t = Instant::now();
    let (ddpo, hrf) = common::one_step_oracle(100_000, 2024);
    let (ed, eh) = ((-ddpo - 1.0).abs(), (-hrf - 1.0).abs());
    let pass = ed < 0.02 && eh < 0.02 && t.elapsed().as_secs() < 120;
    report(
        &mut results,
        2,
        "policy-gradient oracle",
        pass,
        format!("grad_mu estimates ddpo {:.4}, hrf {:.4} (target 1, 2% tolerance)", -ddpo, -hrf),
        t,
    );

    // 3. Window start T reduces to whole-chain DDPO bit for bit, off-policy.
    let t = Instant::now();
    let spec = DenoiserSpec::new(2);
    let old = DenoiserModel::random(&spec, NoiseSchedule::default_linear(), &mut seeds::from_seed(3)).unwrap();
    let mut rng = seeds::from_seed(4);
    let moved: Vec<f64> = old.params.flat().iter().map(|v| v + 1e-3 * rng.random_range(-1.0..1.0)).collect();
    let mut params = old.params.clone();
    params.set_flat(&moved).unwrap();
    let current = old.with_params(params).unwrap();
    let reward = RegionReward::new(vec![1.0, 0.5], 0.0).unwrap();
    let batch_for = |seed| {
        let mut rng = seeds::from_seed(seed);
        let plan = make_start_states(&old, &[40; 32], 32, NoiseHook::Sampled, &mut rng).unwrap();
        collect_rollouts(&old, &plan.states, &reward, &MdpConfig::default(), &mut rng).unwrap()
    };
    let (ba, bb) = (batch_for(9), batch_for(9));
    let mut identical = true;
    for clip in [1e-4, 0.2, f64::INFINITY] {
        let a = ddpo_is_update(&current, &old, &ba, clip).unwrap();
        let b = hrf_windowed_update(&current, &old, &bb, clip).unwrap();
        identical &= a.grads.flat().iter().zip(b.grads.flat()).all(|(x, y)| x.to_bits() == y.to_bits());
        identical &= a.grads.count() == b.grads.count();
    }
    report(&mut results, 3, "boundary reduction", identical, format!("accumulators bit-identical: {identical}"), t);

    // 4. Vendi oracles.
    let t = Instant::now();
    let same = vendi_from_features(&vec![vec![0.3, -1.2, 2.0]; 10]).unwrap();
    let ortho: Vec<Vec<f64>> = (0..6).map(|i| (0..6).map(|j| if i == j { 1.5 } else { 0.0 }).collect()).collect();
    let ortho = vendi_from_features(&ortho).unwrap();
    let three = vendi_from_features(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let closed = (-(2.0f64 / 3.0) * (2.0f64 / 3.0).ln() - (1.0f64 / 3.0) * (1.0f64 / 3.0).ln()).exp();
    let mut rng = seeds::from_seed(5);
    let mut agree = 0.0f64;
    for n in 2..=50 {
        let f: Vec<Vec<f64>> = (0..n).map(|_| seeds::normal_vec(&mut rng, 1 + n % 7 * 9)).collect();
        agree = agree.max((vendi_from_features(&f).unwrap() - common::reference_vendi(&f)).abs());
    }
    let pass = (same - 1.0).abs() < 1e-6 && (ortho - 6.0).abs() < 1e-6 && (three - closed).abs() < 1e-6 && agree < 1e-9;
    report(
        &mut results,
        4,
        "Vendi oracle",
        pass,
        format!("identical {same:.9}, orthogonal(6) {ortho:.9}, 3x3 {three:.6}, max |Δ| vs nalgebra {agree:.1e}"),
        t,
    );

    // 5.–10. The ring pipeline.
    let root = tempfile::tempdir().unwrap();
    let root = root.path();
    let mut evals: Vec<(String, Evaluation)> = Vec::new();

    let t = Instant::now();
    let pre = config(root, "pretrain", 0, None, "pretrain");
    let summary = experiments::pretrain(&pre).unwrap();
    let base = experiments::evaluate(&pre).unwrap();
    let pass = base.covered >= 7 && pre.eval_samples == 2000;
    report(
        &mut results,
        5,
        "pretraining coverage",
        pass,
        format!(
            "{}/8 modes covered {:?}; baseline embedding Vendi {:.4}, reward {:.4}, loss {:.4}",
            base.covered, base.histogram, base.report.vendi_embed, base.report.mean_reward, summary.final_loss
        ),
        t,
    );
    evals.push(("pretrain".into(), base.clone()));

    let t = Instant::now();
    let mut lines = Vec::new();
    let (mut raised, mut closer) = (true, 0);
    for seed in 1..=3u64 {
        let mut row = Vec::new();
        for (method, preset) in [("ddpo", None), ("hrf", Some("baseline"))] {
            let cfg = config(root, method, seed, preset, &format!("{method}-s{seed}"));
            experiments::finetune(&cfg).unwrap();
            let e = experiments::evaluate(&cfg).unwrap();
            row.push((e.report.mean_reward, e.report.vendi_embed));
            evals.push((format!("{method}-s{seed}"), e));
        }
        let (d, h) = (row[0], row[1]);
        raised &= d.0 - base.report.mean_reward >= 0.1 && h.0 - base.report.mean_reward >= 0.1;
        let (dd, dh) = ((d.1 - base.report.vendi_embed).abs(), (h.1 - base.report.vendi_embed).abs());
        if dh < dd {
            closer += 1;
        }
        lines.push(format!("s{seed}: ddpo R {:.3} VS {:.3} | hrf R {:.3} VS {:.3}", d.0, d.1, h.0, h.1));
    }
    let pass = raised && closer >= 2 && t.elapsed().as_secs() < 1800;
    report(
        &mut results,
        6,
        "mode-collapse contrast",
        pass,
        format!(
            "base R {:.3} VS {:.3}; {}; rewards raised ≥0.1: {raised}; HRF closer in {closer}/3",
            base.report.mean_reward,
            base.report.vendi_embed,
            lines.join("; ")
        ),
        t,
    );

    let t = Instant::now();
    let hrf1 = config(root, "hrf", 1, Some("baseline"), "hrf-s1");
    let rows = experiments::inject(&hrf1).unwrap();
    let finals = experiments::final_distances(&rows);
    let order: Vec<f64> = (0..finals.len()).map(|i| i as f64).collect();
    let d: Vec<f64> = finals.iter().map(|f| f.1).collect();
    let rho = spearman(&order, &d);
    let pass = finals.len() == 6 && hrf1.inject.trajectories == 15 && rho <= -0.7;
    let shown: Vec<String> = finals.iter().map(|(s, d)| format!("{s}:{d:.4}")).collect();
    report(&mut results, 7, "injection trend", pass, format!("final distances {}; Spearman {rho:.3}", shown.join(" ")), t);

    let t = Instant::now();
    let s = NoiseSchedule::default_linear();
    let mut worst = 0.0f64;
    for step in [1, 20, 40] {
        let (zm, zv) = common::forward_moment_z(&s, &[1.0, -2.0], step, 100_000, 80 + step as u64);
        worst = worst.max(zm).max(zv);
    }
    report(&mut results, 8, "forward-process statistics", worst < 3.0, format!("max |z| {worst:.3} over t in {{1,20,40}}"), t);

    let t = Instant::now();
    let all_ok = evals.iter().all(|(_, e)| bounds_ok(e, 8.0, 2000.0));
    report(&mut results, 9, "metric bounds", all_ok, format!("{} evaluation runs within 1 ≤ IS ≤ 8, 1 ≤ VS ≤ 2000", evals.len()), t);

    let t = Instant::now();
    let mut mismatched = Vec::new();
    let pre2 = config(root, "pretrain", 0, None, "pretrain-again");
    experiments::pretrain(&pre2).unwrap();
    experiments::evaluate(&pre2).unwrap();
    let ddpo2 = config(root, "ddpo", 1, None, "ddpo-s1-again");
    experiments::finetune(&ddpo2).unwrap();
    experiments::evaluate(&ddpo2).unwrap();
    let hrf2 = config(root, "hrf", 1, Some("baseline"), "hrf-s1-again");
    experiments::finetune(&hrf2).unwrap();
    experiments::evaluate(&hrf2).unwrap();
    experiments::inject(&hrf2).unwrap();
    for (a, b, files) in [
        ("pretrain", "pretrain-again", &["metrics/report.csv", "metrics/vendi_curve.csv", "logs/pretrain.csv"][..]),
        ("ddpo-s1", "ddpo-s1-again", &["metrics/report.csv", "metrics/vendi_curve.csv", "logs/train.csv"][..]),
        ("hrf-s1", "hrf-s1-again", &["metrics/report.csv", "metrics/vendi_curve.csv", "logs/train.csv", "inject/curves.csv"][..]),
    ] {
        for f in files {
            if fs::read(root.join(a).join(f)).unwrap() != fs::read(root.join(b).join(f)).unwrap() {
                mismatched.push(format!("{a}/{f}"));
            }
        }
    }
    let pass = mismatched.is_empty();
    report(&mut results, 10, "reproducibility", pass, format!("10 metric CSVs compared; mismatches {mismatched:?}"), t);

    let failed: Vec<String> = results.iter().filter(|r| !r.pass).map(|r| format!("{} ({})", r.id, r.name)).collect();
    println!("acceptance: {}/{} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        for r in results.iter().filter(|r| !r.pass) {
            eprintln!("failed criterion {}: {}", r.id, r.detail);
        }
        std::process::exit(1);
    }
}
