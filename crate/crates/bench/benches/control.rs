use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use lepra_core::effectiveness::rank_combinations;
use lepra_core::presets::{self, EFFICACY_LEVELS, HAZARD_RATIOS};
use lepra_core::{forward_backward_sweep, DrugMask, OptimalControlProblem};

fn sweep(c: &mut Criterion) {
    let mut g = c.benchmark_group("forward-backward sweep");
    g.sample_size(10);
    for mask in [DrugMask::new(true, false, false, false), DrugMask::MDT] {
        let prob = OptimalControlProblem::therapy(mask);
        g.bench_function(mask.label(), |b| {
            b.iter(|| forward_backward_sweep(black_box(&prob)))
        });
    }
    g.finish();
}

fn ranking(c: &mut Criterion) {
    let p = presets::table3();
    c.bench_function("rank seven combinations", |b| {
        b.iter(|| rank_combinations(black_box(&p), &EFFICACY_LEVELS, &HAZARD_RATIOS))
    });
}

criterion_group!(benches, sweep, ranking);
criterion_main!(benches);
