use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};
use rhythmsim::assignment::instantiate;
use rhythmsim::estimation::{default_start_seed, fit_artifacts, fit_ipf};
use rhythmsim::geo::Scope;
use rhythmsim::rng::seeded_rng;
use rhythmsim::simulator::{run_monte_carlo, Parallelism};
use rhythmsim::{CategoryIndex, GeoPoint, Mid10};
use rhythmsim_bench::{config, corpus, fitted};

fn estimation(c: &mut Criterion) {
    let data = corpus(100, 10);
    let cfg = config(10, 1);
    let mut g = c.benchmark_group("estimation");
    g.sample_size(10);
    g.throughput(Throughput::Elements(data.events.len() as u64));
    g.bench_function("fit_artifacts", |b| {
        b.iter(|| fit_artifacts(black_box(&data.events), &data.inventory, &cfg, None).unwrap())
    });
    let seed = default_start_seed(&data.events, 1e-6);
    let (rows, cols) = (seed.row_sums(), seed.col_sums());
    g.bench_function("ipf", |b| b.iter(|| fit_ipf(black_box(&seed), &rows, &cols, 1e-9, 1000).unwrap()));
    g.finish();
}

fn spatial(c: &mut Criterion) {
    let data = corpus(1, 1);
    let index = CategoryIndex::build(&data.inventory).unwrap();
    let anchor = GeoPoint::new(139.105, 35.233).unwrap();
    let mut g = c.benchmark_group("spatial");
    for k in [10, 40, 200] {
        g.bench_with_input(BenchmarkId::new("knn_category", k), &k, |b, &k| {
            b.iter(|| index.knn(black_box(anchor), Scope::Category(Mid10::FoodDrink), k))
        });
    }
    g.bench_function("within_1km_global", |b| b.iter(|| index.within(black_box(anchor), Scope::Global, 1000.0)));
    g.finish();
}

fn assignment(c: &mut Criterion) {
    let f = fitted(50, 5);
    let anchor = GeoPoint::new(139.105, 35.233).unwrap();
    c.bench_function("assignment/instantiate", |b| {
        b.iter_batched(
            || seeded_rng(&[b"bench"]),
            |mut rng| instantiate(anchor, Mid10::FoodDrink, &f.context, &mut rng).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn simulation(c: &mut Criterion) {
    let f = fitted(100, 10);
    let mut g = c.benchmark_group("simulation");
    g.sample_size(10);
    for users in [1_000usize, 10_000] {
        let cfg = config(10, users);
        g.throughput(Throughput::Elements(users as u64));
        g.bench_with_input(BenchmarkId::new("chains_sequential", users), &cfg, |b, cfg| {
            b.iter(|| run_monte_carlo(&f.artifacts, &f.context, cfg, "baseline", Parallelism::Sequential).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("chains_parallel", users), &cfg, |b, cfg| {
            b.iter(|| run_monte_carlo(&f.artifacts, &f.context, cfg, "baseline", Parallelism::Auto).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, estimation, spatial, assignment, simulation);
criterion_main!(benches);
