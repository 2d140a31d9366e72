use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use lepra_core::analysis::{
    bifurcation_sweep, doubling_heatmap, equilibria, HeatmapSpec, SweepSpec,
};
use lepra_core::{integrate, presets, ParamName, SimulationConfig};

fn simulate(c: &mut Criterion) {
    let p = presets::table3();
    let cfg = SimulationConfig::new(0.0, 100.0, 0.1, presets::THERAPY_INITIAL);
    c.bench_function("integrate 100 d, step 0.1", |b| {
        b.iter(|| integrate(black_box(&p), &cfg))
    });
    c.bench_function("equilibria", |b| b.iter(|| equilibria(black_box(&p))));
}

fn sweeps(c: &mut Criterion) {
    let p = presets::table1();
    let sweep = SweepSpec {
        param: ParamName::Omega,
        lo: 0.0,
        hi: 0.25,
        step: 0.001,
    };
    c.bench_function("bifurcation sweep, 251 values", |b| {
        b.iter(|| bifurcation_sweep(black_box(&p), &sweep))
    });
    let spec = HeatmapSpec {
        dims: (8, 8),
        ..HeatmapSpec::default()
    };
    let mut g = c.benchmark_group("heatmap");
    g.sample_size(10);
    g.bench_function("8x8 grid", |b| {
        b.iter(|| doubling_heatmap(black_box(&p), &spec))
    });
    g.finish();
}

criterion_group!(benches, simulate, sweeps);
criterion_main!(benches);
