use criterion::{criterion_group, criterion_main, Criterion};
use forkgame_bench::reference_params;
use forkgame_core::oracle::exact_utilities;
use forkgame_core::sim_engine::estimate_utilities;
use forkgame_core::game_core::new_state;
use forkgame_core::StrategyProfile;

fn oracle(c: &mut Criterion) {
    let p = reference_params();
    let prof = StrategyProfile::bribe_and_fork(&p);
    c.bench_function("exact_utilities_n3_r6", |b| {
        b.iter(|| exact_utilities(&prof, &p, &new_state()).unwrap())
    });
}

fn monte_carlo(c: &mut Criterion) {
    let p = reference_params();
    let prof = StrategyProfile::bribe_and_fork(&p);
    c.bench_function("estimate_utilities_10k", |b| {
        b.iter(|| estimate_utilities(&prof, &p, 10_000, 1).unwrap())
    });
}

criterion_group!(benches, oracle, monte_carlo);
criterion_main!(benches);
