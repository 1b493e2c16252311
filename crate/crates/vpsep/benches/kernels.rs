//! Kernel benchmarks on the 64x64 unit torus. Run with the default features
//! for the rayon path and with `--no-default-features` for the sequential
//! fallback; the IDs are identical so `critcmp` or the criterion baselines
//! can compare the two directly.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use vpsep::dynamics::{self, ModelParams};
use vpsep::grid::{self, Grid};
use vpsep::relenergy;
use vpsep::state::{make_initial, perturb, InitialKind, Perturbation};
use vpsep::timestep::{step, SchemeConfig};

fn bench_kernels(c: &mut Criterion) {
    let g = Grid::unit(64).expect("valid grid");
    let s = make_initial(&g, InitialKind::Manufactured, 0).expect("initial");
    let zbar = make_initial(&g, InitialKind::Spinodal, 0).expect("initial");
    let z = perturb(
        &zbar,
        &Perturbation { eps: 1e-2, seed: 1, mask: Default::default() },
    )
    .expect("perturb");
    let p = ModelParams::default();
    let cfg = SchemeConfig::default();

    let mut group = c.benchmark_group("kernels-64");
    group.bench_function("fft2_roundtrip", |b| {
        b.iter(|| {
            let sp = grid::fft2(black_box(&s.phi));
            black_box(grid::ifft2(&sp))
        })
    });
    group.bench_function("dealias_product", |b| {
        b.iter(|| black_box(grid::prod(&s.phi, &s.q, true)))
    });
    group.bench_function("leray_project", |b| {
        b.iter(|| black_box(grid::leray_project(&s.u)))
    });
    group.bench_function("rhs_full", |b| {
        b.iter(|| black_box(dynamics::rhs_full(&s, &p).expect("rhs")))
    });
    group.bench_function("step", |b| {
        b.iter(|| black_box(step(&s, &cfg, &p).expect("step")))
    });
    group.bench_function("gronwall_components", |b| {
        b.iter(|| black_box(relenergy::gronwall_components(&z, &zbar, &p).expect("gronwall")))
    });
    group.bench_function("relative_energy", |b| {
        b.iter(|| {
            black_box(relenergy::relative_energy(&z, &zbar, 1.0, p.c0, &p.potential).expect("rel"))
        })
    });
    group.finish();
}

criterion_group! {
    name = kernels;
    config = Criterion::default().sample_size(20);
    targets = bench_kernels
}
criterion_main!(kernels);
