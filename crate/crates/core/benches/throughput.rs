use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stem::synth::{self, SyntheticConfig};
use stem::transition;

fn config(samples: usize) -> SyntheticConfig {
    let capabilities: Vec<f64> = (1..=8).map(|i| i as f64).collect();
    SyntheticConfig {
        difficulty_mixture: SyntheticConfig::polarized_mixture(&capabilities),
        capabilities,
        sample_count: samples,
        contamination_rate: 0.05,
        error_rate: 0.02,
        noise_temperature: 0.5,
        seed: 7,
    }
}

fn bench_pool(c: &mut Criterion) {
    let dataset = synth::generate_family(&config(20_000)).unwrap();
    let mut group = c.benchmark_group("build_sts_pool");
    group.bench_with_input(BenchmarkId::new("parallel", 20_000), &dataset, |b, d| {
        b.iter(|| transition::build_sts_pool(&d.matrix).unwrap())
    });
    group.bench_with_input(BenchmarkId::new("serial", 20_000), &dataset, |b, d| {
        b.iter(|| transition::build_sts_pool_serial(&d.matrix).unwrap())
    });
    group.finish();
}

fn bench_generate(c: &mut Criterion) {
    let cfg = config(5_000);
    let mut group = c.benchmark_group("generate_family");
    group.bench_with_input(BenchmarkId::new("parallel", 5_000), &cfg, |b, cfg| {
        b.iter(|| synth::generate_family(cfg).unwrap())
    });
    group.bench_with_input(BenchmarkId::new("serial", 5_000), &cfg, |b, cfg| {
        b.iter(|| synth::generate_family_serial(cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_pool, bench_generate);
criterion_main!(benches);
