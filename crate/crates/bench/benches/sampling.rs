use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fastercache::denoisers::HookSet;
use fastercache::numerics::fft2;
use fastercache::{
    sample, CacheConfig, CacheStrategy, LatentTensor, NoisePredictor, NoiseSchedule, SamplerConfig, ScheduleKind,
    StrategyKind, TinyDit, TinyDitConfig,
};

const SHAPE: [usize; 4] = [4, 4, 16, 16];

fn model() -> TinyDit {
    TinyDit::new(TinyDitConfig::default()).expect("default tiny DiT")
}

fn predict(c: &mut Criterion) {
    let model = model();
    let x = LatentTensor::randn(SHAPE, 1, 0);
    let pass = HookSet::pass(TinyDitConfig::default().layers);
    c.bench_function("tiny_dit_predict", |b| {
        b.iter(|| model.predict(black_box(&x), 500, 1, &pass).expect("predict"))
    });
}

fn spectrum(c: &mut Criterion) {
    let x = LatentTensor::randn([8, 4, 32, 32], 2, 0);
    c.bench_function("fft2_8x4x32x32", |b| b.iter(|| fft2(black_box(&x)).expect("fft2")));
}

fn sampling(c: &mut Criterion) {
    let model = model();
    let schedule = NoiseSchedule::new(ScheduleKind::LinearBeta, 1000).expect("schedule");
    let config = SamplerConfig::default();
    let mut group = c.benchmark_group("sample_30_steps");
    group.sample_size(10);
    for kind in StrategyKind::ALL {
        let strategy = CacheStrategy::new(kind, CacheConfig::default());
        group.bench_with_input(BenchmarkId::from_parameter(kind.name()), &strategy, |b, s| {
            b.iter(|| sample(&model, &schedule, SHAPE, &config, s).expect("sample"))
        });
    }
    group.finish();
}

criterion_group!(benches, predict, spectrum, sampling);
criterion_main!(benches);
