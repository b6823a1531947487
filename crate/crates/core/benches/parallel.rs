//! Compares the rayon-backed estimator paths against single-threaded
//! execution. With `--no-default-features` the same benchmarks run on the
//! sequential fallback for a direct comparison.

use criterion::{criterion_group, criterion_main, Criterion};

use decodelab::calibration::{default_grid, objective_j, verify_greedy_optimality, EstimatorMode};
use decodelab::exec::{ordered_map, ordered_map_seq};
use decodelab::strategy::StrategySpec;
use decodelab::worlds::{generate_world, world_presets, World, WorldSpec};

fn bench_world(instances: usize) -> World {
    let spec = WorldSpec {
        num_instances: instances,
        ..world_presets("vqa-headheavy").unwrap()
    };
    generate_world(&spec, 1).unwrap()
}

fn thread_counts() -> Vec<usize> {
    let max = std::thread::available_parallelism().map_or(4, |n| n.get());
    if max > 1 {
        vec![1, max]
    } else {
        vec![1]
    }
}

fn bench_theorem_check(c: &mut Criterion) {
    let world = bench_world(64);
    let grid = default_grid(9);
    let mut group = c.benchmark_group("verify_greedy_optimality/64-instances");
    group.sample_size(20);
    if cfg!(feature = "parallel") {
        for threads in thread_counts() {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            group.bench_function(format!("{threads}-threads"), |b| {
                b.iter(|| pool.install(|| verify_greedy_optimality(&world, &grid).unwrap()))
            });
        }
    } else {
        group.bench_function("sequential-fallback", |b| {
            b.iter(|| verify_greedy_optimality(&world, &grid).unwrap())
        });
    }
    group.finish();
}

fn bench_monte_carlo(c: &mut Criterion) {
    let world = bench_world(32);
    let spec = StrategySpec::top_p(0.9, 1.0).unwrap();
    let mode = EstimatorMode::MonteCarlo {
        n_samples: 64_000,
        seeds: vec![0, 1, 2, 3],
    };
    let mut group = c.benchmark_group("objective_j_mc/32-instances-64k");
    group.sample_size(20);
    if cfg!(feature = "parallel") {
        for threads in thread_counts() {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            group.bench_function(format!("{threads}-threads"), |b| {
                b.iter(|| pool.install(|| objective_j(&world, &spec, &mode).unwrap()))
            });
        }
    } else {
        group.bench_function("sequential-fallback", |b| {
            b.iter(|| objective_j(&world, &spec, &mode).unwrap())
        });
    }
    group.finish();
}

fn bench_ordered_map(c: &mut Criterion) {
    // representative per-instance workload: a small dense reduction
    let items: Vec<u64> = (0..512).collect();
    let work = |x: &u64| -> f64 {
        let mut acc = 0.0f64;
        for i in 0..2_000u64 {
            acc += ((x * 31 + i) as f64).sqrt();
        }
        acc
    };
    let mut group = c.benchmark_group("ordered_map/512x2k");
    group.bench_function("backend", |b| b.iter(|| ordered_map(&items, work)));
    group.bench_function("sequential", |b| b.iter(|| ordered_map_seq(&items, work)));
    group.finish();
}

criterion_group!(benches, bench_theorem_check, bench_monte_carlo, bench_ordered_map);
criterion_main!(benches);
