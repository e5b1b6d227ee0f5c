use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use hrf_core::diffusion::{ddpm_loss_step, sample_from_noise, DenoiserModel, DenoiserSpec, NoiseSchedule};
use hrf_core::metrics::vendi_from_features;
use hrf_core::rewards::{dct_size_proxy, RegionReward};
use hrf_core::rl::{collect_rollouts, hrf_windowed_update, make_start_states, MdpConfig, NoiseHook};
use hrf_core::seeds;

fn model() -> DenoiserModel {
    DenoiserModel::random(&DenoiserSpec::new(2), NoiseSchedule::default_linear(), &mut seeds::from_seed(0)).unwrap()
}

fn sampling(c: &mut Criterion) {
    let m = model();
    c.bench_function("sample_from_noise T=40", |b| b.iter(|| sample_from_noise(&m, black_box(7)).unwrap()));
}

fn pretrain_step(c: &mut Criterion) {
    let m = model();
    let batch: Vec<Vec<f64>> = (0..64).map(|i| vec![(i as f64).cos() * 3.0, (i as f64).sin() * 3.0]).collect();
    let mut rng = seeds::from_seed(1);
    c.bench_function("ddpm_loss_step batch=64", |b| b.iter(|| ddpm_loss_step(&m, &batch, &mut rng).unwrap()));
}

fn windowed_update(c: &mut Criterion) {
    let m = model();
    let reward = RegionReward::new(vec![1.0, 0.0], 0.0).unwrap();
    let cfg = MdpConfig::default();
    let mut rng = seeds::from_seed(2);
    let plan = make_start_states(&m, &[12; 32], 32, NoiseHook::Sampled, &mut rng).unwrap();
    let batch = collect_rollouts(&m, &plan.states, &reward, &cfg, &mut rng).unwrap();
    c.bench_function("hrf_windowed_update 32 rollouts t=12", |b| {
        b.iter(|| hrf_windowed_update(&m, &m, black_box(&batch), 1e-4).unwrap())
    });
}

fn vendi(c: &mut Criterion) {
    let mut rng = seeds::from_seed(3);
    let feats: Vec<Vec<f64>> = (0..2000).map(|_| seeds::normal_vec(&mut rng, 16)).collect();
    c.bench_function("vendi n=2000 f=16", |b| b.iter(|| vendi_from_features(black_box(&feats)).unwrap()));
    let small: Vec<Vec<f64>> = feats.iter().take(50).map(|f| f.iter().chain(f).chain(f).chain(f).copied().collect()).collect();
    c.bench_function("vendi n=50 f=64 (primal)", |b| b.iter(|| vendi_from_features(black_box(&small)).unwrap()));
}

fn dct(c: &mut Criterion) {
    let mut rng = seeds::from_seed(4);
    c.bench_function("dct_size_proxy 16x16", |b| {
        b.iter_batched(
            || seeds::normal_vec(&mut rng, 256).into_iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect::<Vec<_>>(),
            |img| dct_size_proxy(&img, 16, 16, 1.0).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, sampling, pretrain_step, windowed_update, vendi, dct);
criterion_main!(benches);
