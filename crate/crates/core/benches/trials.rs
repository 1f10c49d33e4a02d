use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use formation_cp::harness::{run_calibration_campaign, run_evaluation, ExperimentConfig, Method};
use formation_cp::oracle::random_qp;
use formation_cp::qp::solve;

const TRIALS: usize = 64;

fn trials(c: &mut Criterion) {
    let cfg = ExperimentConfig::default();
    let cal = run_calibration_campaign(&cfg, 200, None).expect("calibration");
    let mut group = c.benchmark_group("risk_aware_trials");
    group.sample_size(10);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    for (label, threads) in [("sequential", Some(1)), ("parallel", Some(workers))] {
        group.bench_with_input(BenchmarkId::new(label, TRIALS), &threads, |b, &threads| {
            b.iter(|| {
                run_evaluation(&cfg, &cal.table, &cal.baselines, Method::RiskAware, TRIALS, threads)
                    .expect("evaluation")
            })
        });
    }
    group.finish();
}

fn qp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let problems: Vec<_> = (0..256).map(|_| random_qp(&mut rng)).collect();
    c.bench_function("qp_solve_256", |b| {
        b.iter(|| {
            for p in &problems {
                black_box(solve(black_box(p)));
            }
        })
    });
}

criterion_group!(benches, trials, qp);
criterion_main!(benches);
