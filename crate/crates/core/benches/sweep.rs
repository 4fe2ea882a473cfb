use criterion::{criterion_group, criterion_main, Criterion};

use exclusion_zone::dynamics::ModelParams;
use exclusion_zone::growth::GrowthFn;
use exclusion_zone::sweep::{self, Execution, SweepSettings};

fn params() -> ModelParams {
    ModelParams {
        alpha: 14.0,
        beta: 12.0,
        gamma: 5.0,
        d_u: 0.1,
        d_v: 0.05,
        growth: GrowthFn::cubic(1.0, 0.05).unwrap(),
        a: 0.4,
        length: 1.0,
    }
}

fn sweep_execution(c: &mut Criterion) {
    let p = params();
    let grid = sweep::interior_a_grid(p.length, 8);
    let s = SweepSettings { t_end: Some(40.0), max_extension: 1.0, ..SweepSettings::default() };
    let mut g = c.benchmark_group("limiting_profile_8");
    g.sample_size(10);
    g.bench_function("sequential", |b| {
        b.iter(|| sweep::limiting_profile_with(&p, &grid, &s, Execution::Sequential).unwrap())
    });
    g.bench_function("parallel", |b| {
        b.iter(|| sweep::limiting_profile_with(&p, &grid, &s, Execution::Parallel).unwrap())
    });
    g.finish();
}

criterion_group!(benches, sweep_execution);
criterion_main!(benches);
