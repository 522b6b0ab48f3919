//! Sequential vs data-parallel instance generation.
//!
//! Run with `cargo bench -p qrelax` (parallel feature on by default) to
//! compare the rayon row-fill and replicate fan-out against the sequential
//! fallback on the same seeds.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use qrelax::generators::{batch_a_infinity, generate, ExampleConfig, Family};
use std::hint::black_box;

fn bench_materialise(cr: &mut Criterion) {
    let mut cfg = ExampleConfig::defaults(Family::Ex1);
    cfg.n = 256;
    cfg.m = 128;
    cfg.seed = 42;
    let mut group = cr.benchmark_group("materialise_gram_256");
    group.bench_function("seq", |b| {
        b.iter_batched(|| cfg.clone(), |c| black_box(generate(&c).unwrap()), BatchSize::SmallInput)
    });
    #[cfg(feature = "parallel")]
    group.bench_function("par", |b| {
        b.iter_batched(
            || cfg.clone(),
            |c| black_box(qrelax::generators::generate_par(&c).unwrap()),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn bench_batch_rates(cr: &mut Criterion) {
    let mut cfg = ExampleConfig::defaults(Family::Ex1);
    cfg.n = 128;
    cfg.m = 64;
    cfg.seed = 42;
    let mut group = cr.benchmark_group("batch_a_infinity_64x128");
    group.bench_function("seq", |b| {
        b.iter(|| black_box(batch_a_infinity(&cfg, 64).unwrap()))
    });
    #[cfg(feature = "parallel")]
    group.bench_function("par", |b| {
        b.iter(|| black_box(qrelax::generators::batch_a_infinity_par(&cfg, 64).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, bench_materialise, bench_batch_rates);
criterion_main!(benches);
