use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sc_resilience::parallel;
use sc_resilience::rng::SeedStream;
use sc_resilience::strategy::{enumerate_configurations, Evaluator};
use sc_resilience::worldgen::{tiny_world, TINY_FOCAL_FIRM};

// Scores all 16 sourcing configurations of the small test world, once through
// the data-parallel map and once through the sequential reference path.
fn configurations(c: &mut Criterion) {
    let world = tiny_world(1);
    let eval = Evaluator::new(&world, 365, SeedStream::new(1), 1);
    let configs = enumerate_configurations(TINY_FOCAL_FIRM, &world.candidate_links(TINY_FOCAL_FIRM));

    let mut group = c.benchmark_group("evaluate_16_configurations");
    group.sample_size(10);
    group.bench_function("parallel", |b| b.iter(|| parallel::map(black_box(&configs), |c| eval.evaluate(c))));
    group.bench_function("sequential", |b| {
        b.iter(|| parallel::map_sequential(black_box(&configs), |c| eval.evaluate(c)))
    });
    group.finish();
}

criterion_group!(benches, configurations);
criterion_main!(benches);
