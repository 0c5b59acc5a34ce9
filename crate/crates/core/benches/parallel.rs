use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spatial_precision::estimators::{Method, SolverConfig};
use spatial_precision::experiment::{run_precision_experiment, ExperimentConfig, ExperimentKind};
use spatial_precision::par::Execution;
use spatial_precision::samplers::{gen_model1, replication_rng, sample_elliptical, EllipticalLaw};
use spatial_precision::selection::{fit_path, input_matrix, lambda_grid, Spacing};
use spatial_precision::spatial::{spatial_median, sscm_with, DEFAULT_MEDIAN_MAX_ITER, DEFAULT_MEDIAN_TOL};

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn label(exec: Execution) -> &'static str {
    match exec {
        Execution::Sequential => "sequential",
        Execution::Parallel => "parallel",
    }
}

fn sscm(c: &mut Criterion) {
    let model = gen_model1(100, 0.6).unwrap();
    let data = sample_elliptical(EllipticalLaw::t3(), &vec![0.0; 100], &model.sigma, 2000, &mut replication_rng(3, 0))
        .unwrap();
    let center = spatial_median(&data, DEFAULT_MEDIAN_TOL, DEFAULT_MEDIAN_MAX_ITER).point;
    let mut group = c.benchmark_group("sscm_n2000_p100");
    for exec in MODES {
        group.bench_function(label(exec), |b| b.iter(|| sscm_with(exec, black_box(&data), &center)));
    }
    group.finish();
}

fn clime_path(c: &mut Criterion) {
    let model = gen_model1(40, 0.6).unwrap();
    let data =
        sample_elliptical(EllipticalLaw::Normal, &vec![0.0; 40], &model.sigma, 100, &mut replication_rng(5, 0)).unwrap();
    let grid = lambda_grid(0.05, 1.0, 10, Spacing::Log).unwrap();
    let mut group = c.benchmark_group("sclime_path_p40");
    group.sample_size(10);
    for exec in MODES {
        let m = input_matrix(Method::Sclime, &data, exec).unwrap();
        let cfg = SolverConfig { exec, ..SolverConfig::default() };
        group.bench_function(label(exec), |b| b.iter(|| fit_path(Method::Sclime, black_box(&m), &grid, &cfg)));
    }
    group.finish();
}

fn replications(c: &mut Criterion) {
    let mut group = c.benchmark_group("precision_experiment");
    group.sample_size(10);
    for exec in MODES {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::Precision);
        cfg.dims = vec![15];
        cfg.n = 60;
        cfg.replications = 8;
        cfg.grid.size = 10;
        cfg.execution = exec;
        group.bench_with_input(BenchmarkId::new("p15_reps8", label(exec)), &cfg, |b, cfg| {
            b.iter(|| run_precision_experiment(cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sscm, clime_path, replications);
criterion_main!(benches);
