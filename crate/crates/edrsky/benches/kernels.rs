//! Sequential vs rayon variants of the hot kernels.
//!
//! Run with `cargo bench --bench kernels`. The parallel variants are the
//! default code path; the `_seq` functions are the fallback used when the
//! `parallel` feature is disabled.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use edrsky::envmap::{
    integrated_illumination, integrated_illumination_seq, solid_angles, solid_angles_seq,
    SkyangularGeometry,
};
use edrsky::synthetic::random_sky;
use edrsky::tonemap::TonemapOperator;

fn bench_solid_angles(c: &mut Criterion) {
    let mut group = c.benchmark_group("solid_angles");
    for n in [256usize, 1024] {
        let geom = SkyangularGeometry::new(n).unwrap();
        group.bench_with_input(BenchmarkId::new("seq", n), &geom, |b, g| {
            b.iter(|| solid_angles_seq(g))
        });
        group.bench_with_input(BenchmarkId::new("par", n), &geom, |b, g| {
            b.iter(|| solid_angles(g))
        });
    }
    group.finish();
}

fn bench_illumination(c: &mut Criterion) {
    let mut group = c.benchmark_group("integrated_illumination");
    for n in [256usize, 1024] {
        let geom = SkyangularGeometry::new(n).unwrap();
        let omega = solid_angles(&geom);
        let img = random_sky(n, 11).unwrap();
        group.bench_with_input(BenchmarkId::new("seq", n), &(), |b, _| {
            b.iter(|| integrated_illumination_seq(&img, &omega).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("par", n), &(), |b, _| {
            b.iter(|| integrated_illumination(&img, &omega).unwrap())
        });
    }
    group.finish();
}

fn bench_tonemap(c: &mut Criterion) {
    let mut group = c.benchmark_group("tonemap_mulaw_log2");
    let op = TonemapOperator::MuLawLog2 { mu: 5000.0 };
    for n in [256usize, 1024] {
        let img = random_sky(n, 11).unwrap();
        group.bench_with_input(BenchmarkId::new("par", n), &(), |b, _| {
            b.iter(|| op.apply(&img).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_solid_angles, bench_illumination, bench_tonemap);
criterion_main!(benches);
