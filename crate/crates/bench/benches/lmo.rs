use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use imuon_bench::{fixture, standard_dims};
use imuon_core::manifolds::{self, ManifoldDims, ScaledSpace};
use imuon_core::{baselines, oracle, NormSpec};
use std::hint::black_box;

fn intrinsic(c: &mut Criterion) {
    let mut group = c.benchmark_group("lmo_direction");
    for (label, dims) in standard_dims() {
        let (x, g) = fixture(&dims, 1);
        for norm in [NormSpec::Spectral, NormSpec::Frobenius, NormSpec::Nuclear, NormSpec::Schatten { p: 3.0 }] {
            group.bench_with_input(BenchmarkId::new(norm.to_string(), &label), &(&x, &g), |b, (x, g)| {
                b.iter(|| manifolds::lmo_direction(black_box(x), black_box(g), norm, 1.0).unwrap())
            });
        }
    }
    group.finish();
}

fn retraction(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for (label, dims) in standard_dims() {
        let (x, g) = fixture(&dims, 2);
        let xi = manifolds::lmo_direction(&x, &g, NormSpec::Spectral, 1.0).unwrap().xi.scaled(-1.0);
        group.bench_function(BenchmarkId::new("retract", &label), |b| {
            b.iter(|| manifolds::retract(black_box(&x), black_box(&xi), 0.1).unwrap())
        });
    }
    group.finish();
}

fn baselines_vs_intrinsic(c: &mut Criterion) {
    let dims = ManifoldDims::fixed_rank(200, 200, 5);
    let (x, g) = fixture(&dims, 3);
    let mut group = c.benchmark_group("fixed_rank_200");
    group.bench_function("imuon_spectral", |b| {
        b.iter(|| manifolds::lmo_direction(black_box(&x), black_box(&g), NormSpec::Spectral, 1.0).unwrap())
    });
    group.bench_function("factorwise_muon", |b| {
        b.iter(|| baselines::factorwise_lmo_direction(black_box(&x), black_box(&g), NormSpec::Spectral, 1.0).unwrap())
    });
    group.finish();
}

fn projected_ascent(c: &mut Criterion) {
    let (x, g) = fixture(&ManifoldDims::grassmann(10, 3), 4);
    let scaled = manifolds::scale_gradient(&x, &g).unwrap();
    let (h, space): (_, &ScaledSpace) = (&scaled.blocks[0], &scaled.spaces[0]);
    let mut group = c.benchmark_group("oracle");
    group.sample_size(10);
    group.bench_function("dykstra_nuclear_grassmann_10x3", |b| {
        b.iter(|| oracle::dykstra_lmo(black_box(h), space, NormSpec::Nuclear, 1.0, 1e-10, oracle::ASCENT_MAX).unwrap())
    });
    group.finish();
}

criterion_group!(benches, intrinsic, retraction, baselines_vs_intrinsic, projected_ascent);
criterion_main!(benches);
