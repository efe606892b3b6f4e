use std::hint::black_box;

use bcucb::contract::ChainMode;
use bcucb::runner::{run_replicas, Replica};
use bcucb::sim::RunOptions;
use bcucb::{load_scenario, Preset};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn replicas(preset: Preset, horizon: u64, seeds: u64) -> Vec<Replica> {
    (0..seeds)
        .map(|seed| {
            let text = format!("preset = \"{}\"\nhorizon = {horizon}\nmaster_seed = {seed}\n", preset.name());
            Replica {
                horizon,
                seed,
                config: load_scenario(&text).unwrap().config,
            }
        })
        .collect()
}

fn bench_replicas(c: &mut Criterion) {
    let options = RunOptions {
        chain: ChainMode::Off,
        keep_records: false,
    };
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut group = c.benchmark_group("replicas");
    group.sample_size(10);
    for preset in [Preset::NoAttack, Preset::Theorem1] {
        let plan = replicas(preset, 500, 8);
        group.bench_with_input(BenchmarkId::new("sequential", preset.name()), &plan, |b, plan| {
            b.iter(|| black_box(run_replicas(plan, 1, options).unwrap()))
        });
        // Without the `parallel` feature this measures the sequential fallback.
        group.bench_with_input(BenchmarkId::new(format!("parallel-{threads}"), preset.name()), &plan, |b, plan| {
            b.iter(|| black_box(run_replicas(plan, 0, options).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_replicas);
criterion_main!(benches);
