use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use spectral_langevin::analysis::iact;
use spectral_langevin::{
    conditional_log_partition, kl_report, run, step, synthesize_data, ErrorField, ModeSpectrum, SamplerConfig,
    ScalarPotential, ScoreError, ScoreModel,
};

fn power_law(n: usize) -> ModeSpectrum {
    ModeSpectrum::new(
        (1..=n).map(|j| (j as f64).powi(-2)).collect(),
        (1..=n / 2).map(|j| (-0.1 * j as f64).exp()).collect(),
        0.05,
    )
    .unwrap()
}

fn model(spec: &ModeSpectrum) -> ScoreModel {
    let n = spec.n_modes();
    let err = ScoreError::new(ErrorField::LinearTau { slopes: vec![0.1; n] }, ErrorField::Constant { value: 0.01 });
    ScoreModel::gaussian(spec.clone(), spec.prior_vars().to_vec(), 1e-3, err).unwrap()
}

fn euler_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("euler_step");
    for n in [100, 10_000, 40_000] {
        let spec = power_law(n);
        let m = model(&spec);
        let (_, y) = synthesize_data(&spec, 1);
        let x = vec![0.1; n];
        let noise = vec![0.5; n];
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| step(black_box(&x), &m, &y, 1e-3, &noise).unwrap())
        });
    }
    g.finish();
}

fn chain_run(c: &mut Criterion) {
    let spec = power_law(1_000);
    let m = model(&spec);
    let (_, y) = synthesize_data(&spec, 1);
    let mut cfg = SamplerConfig::new(1e-4, 1_000, 1, 3);
    cfg.trace_modes = Some(vec![]);
    c.bench_function("run_1000_modes_1000_steps", |b| b.iter(|| run(&m, &y, &cfg).unwrap()));
}

fn smoothed_potential(c: &mut Criterion) {
    let phi = ScalarPotential::Quartic { c: 1.0 };
    c.bench_function("quartic_smoothed_potential", |b| {
        b.iter(|| conditional_log_partition(&phi, 1.0, 0.5, 0.05, black_box(0.7)).unwrap())
    });
}

fn kl(c: &mut Criterion) {
    let spec = power_law(400);
    let m = model(&spec);
    let (_, y) = synthesize_data(&spec, 1);
    c.bench_function("kl_report_400_modes", |b| b.iter(|| kl_report(&m, &y).unwrap()));
}

fn autocorrelation_time(c: &mut Criterion) {
    let chains: Vec<Vec<f64>> = (0..4)
        .map(|k| {
            let mut x = 0.0f64;
            (0..10_000)
                .map(|i| {
                    x = 0.9 * x + ((i * 7919 + k * 104_729) % 1000) as f64 / 1000.0 - 0.5;
                    x
                })
                .collect()
        })
        .collect();
    let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
    c.bench_function("iact_4x10000", |b| b.iter(|| iact(black_box(&refs)).unwrap()));
}

criterion_group!(benches, euler_step, chain_run, smoothed_potential, kl, autocorrelation_time);
criterion_main!(benches);
