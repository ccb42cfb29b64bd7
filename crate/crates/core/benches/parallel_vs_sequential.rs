use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use ensemble_core::diagnostics::{extreme_rank_stats_with, pairwise_ks_with};
use ensemble_core::synthetic::county_grid;
use ensemble_core::{run_chains, seed_plan, BalanceSpec, ChainConfig, Execution, MetricsSpec};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn pairwise_ks(c: &mut Criterion) {
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let series: Vec<Vec<f64>> = (0..10).map(|_| (0..50_000).map(|_| rng.gen()).collect()).collect();
    let mut group = c.benchmark_group("pairwise_ks_10_chains");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, 50_000), &exec, |b, &exec| {
            b.iter(|| pairwise_ks_with(black_box(&series), 50_000, exec).unwrap())
        });
    }
    group.finish();
}

fn chains(c: &mut Criterion) {
    let g = county_grid(10, 10, 2);
    let spec = BalanceSpec::for_graph(&g, 4, 0.05).unwrap();
    let seed = seed_plan(&g, 4, &spec, &mut ChaCha12Rng::seed_from_u64(0)).unwrap();
    let metrics = MetricsSpec::for_graph(&g, None).unwrap();
    let cfgs: Vec<ChainConfig> = (0..8).map(|s| ChainConfig::new(4, 20.0, 0.05, 500, s)).collect();
    let seeds = vec![seed; cfgs.len()];
    let mut group = c.benchmark_group("run_8_chains_500_steps");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| run_chains(&g, &seeds, &cfgs, &metrics, exec)));
    }
    group.finish();
}

fn extreme_ranks(c: &mut Criterion) {
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let ensemble: Vec<Vec<f64>> = (0..200_000)
        .map(|_| {
            let mut row: Vec<f64> = (0..7).map(|_| rng.gen()).collect();
            row.sort_by(f64::total_cmp);
            row
        })
        .collect();
    let enacted = [0.39, 0.41, 0.48, 0.56, 0.6, 0.64, 0.75];
    let mut group = c.benchmark_group("extreme_rank_stats_200k_plans");
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| extreme_rank_stats_with(black_box(&ensemble), &enacted, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, pairwise_ks, chains, extreme_ranks);
criterion_main!(benches);
