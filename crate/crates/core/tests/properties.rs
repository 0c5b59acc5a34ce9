mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spatial_precision::applications::{classification_metrics, lda_predict, recovery_rates, roc_path_from_input, LdaRule};
use spatial_precision::dataset::Dataset;
use spatial_precision::estimators::{clime_columns, sclime, sglasso, symmetrize_min, Method, SolverConfig};
use spatial_precision::linalg::{norm_elementwise_inf, sym_eigenvalues, Matrix, SymmetricMatrix};
use spatial_precision::par::Execution;
use spatial_precision::samplers::{contaminate, contamination_count};
use spatial_precision::selection::{input_matrix, lambda_grid, likelihood_loss, select_lambda_validation, Spacing};
use spatial_precision::spatial::{spatial_median, sscm, DEFAULT_MEDIAN_MAX_ITER, DEFAULT_MEDIAN_TOL};

fn normal_data(seed: u64, n: usize, p: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n * p)
        .map(|k| rng.sample::<f64, _>(rand_distr::StandardNormal) * (1.0 + (k % p) as f64 * 0.3))
        .collect();
    Dataset::from_vec(n, p, values).unwrap()
}

fn spd(seed: u64, p: usize) -> SymmetricMatrix {
    common::random_spd(p, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig::with_cases(n)
}

proptest! {
    #![proptest_config(cases(48))]

    #[test]
    fn sscm_is_symmetric_psd_with_trace_one_off_center(seed in any::<u64>(), n in 3usize..40, p in 2usize..7) {
        let data = normal_data(seed, n, p);
        let mu = spatial_median(&data, DEFAULT_MEDIAN_TOL, DEFAULT_MEDIAN_MAX_ITER).point;
        let s = sscm(&data, &mu);
        // the median can sit on a sample point, whose sign is zero
        let off_center = (0..n).filter(|&i| data.row(i).iter().zip(&mu).any(|(x, m)| x != m)).count();
        prop_assert!((s.trace() - off_center as f64 / n as f64).abs() < 1e-12, "trace {} with {} of {} off center", s.trace(), off_center, n);
        prop_assert!(sym_eigenvalues(&s, 1e-14).unwrap().iter().all(|&e| e > -1e-12));
        for i in 0..p {
            for j in 0..p {
                prop_assert_eq!(s[(i, j)].to_bits(), s[(j, i)].to_bits());
            }
        }
    }

    #[test]
    fn sclime_is_feasible_and_its_objective_falls_with_lambda(seed in any::<u64>(), p in 2usize..7, a in 0.005f64..0.9, b in 0.005f64..0.9) {
        let m = spd(seed, p);
        let (lo, hi) = (a.min(b), a.max(b));
        let cfg = SolverConfig::default();
        let mut objective = Vec::new();
        for lambda in [lo, hi] {
            let cols = clime_columns(&m, lambda, &cfg, None).unwrap();
            prop_assert!(cols.converged());
            let gap = norm_elementwise_inf(&m.matmul(&cols.matrix()).sub(&Matrix::identity(p)));
            prop_assert!(gap <= lambda + 10.0 * cfg.tol_primal, "gap {} at {}", gap, lambda);
            objective.push(cols.columns.iter().flat_map(|c| c.beta.iter()).map(|b| b.abs()).sum::<f64>());
        }
        prop_assert!(objective[0] >= objective[1] - 1e-6);
    }

    #[test]
    fn symmetrize_min_contracts_toward_symmetric_targets(seed in any::<u64>(), p in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v1 = Matrix::from_fn(p, p, |_, _| rng.random_range(-2.0..2.0));
        let t = SymmetricMatrix::from_upper(p, |_, _| rng.random_range(-2.0..2.0));
        let v = symmetrize_min(&v1);
        prop_assert!(norm_elementwise_inf(&v.sub(&t)) <= norm_elementwise_inf(&v1.sub(&t)));
    }

    #[test]
    fn solvers_are_permutation_equivariant(seed in any::<u64>(), perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(), lambda in 0.02f64..0.5) {
        let m = spd(seed, 5);
        let pm = m.permuted(&perm);
        let cfg = SolverConfig::default();
        let a = sclime(&pm, lambda, &cfg).unwrap().matrix;
        let b = sclime(&m, lambda, &cfg).unwrap().matrix.permuted(&perm);
        prop_assert!(norm_elementwise_inf(&a.sub(&b)) < 1e-8);
        let a = sglasso(&pm, lambda, &cfg).unwrap().matrix;
        let b = sglasso(&m, lambda, &cfg).unwrap().matrix.permuted(&perm);
        prop_assert!(norm_elementwise_inf(&a.sub(&b)) < 1e-5);
    }

    #[test]
    fn spatial_estimates_ignore_radial_rescaling(seed in any::<u64>(), n in 20usize..50) {
        let p = 4;
        let data = normal_data(seed, n, p);
        let mu = spatial_median(&data, DEFAULT_MEDIAN_TOL, DEFAULT_MEDIAN_MAX_ITER).point;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut moved = data.clone();
        for i in 0..n {
            let c: f64 = rng.random_range(0.2..5.0);
            for (j, x) in moved.row_mut(i).iter_mut().enumerate() {
                *x = mu[j] + c * (*x - mu[j]);
            }
        }
        let cfg = SolverConfig::default();
        for method in [Method::Sclime, Method::Sglasso] {
            let m0 = input_matrix(method, &data, Execution::Sequential).unwrap();
            let m1 = input_matrix(method, &moved, Execution::Sequential).unwrap();
            prop_assert!(norm_elementwise_inf(&m0.sub(&m1)) < 1e-6);
            let v0 = if method == Method::Sclime { sclime(&m0, 0.1, &cfg) } else { sglasso(&m0, 0.1, &cfg) }.unwrap();
            let v1 = if method == Method::Sclime { sclime(&m1, 0.1, &cfg) } else { sglasso(&m1, 0.1, &cfg) }.unwrap();
            prop_assert!(norm_elementwise_inf(&v0.matrix.sub(&v1.matrix)) < 1e-4);
        }
    }

    #[test]
    fn likelihood_loss_is_strictly_convex(s1 in any::<u64>(), s2 in any::<u64>(), sm in any::<u64>()) {
        let (a, b, m) = (spd(s1, 4), spd(s2, 4), spd(sm, 4));
        let mid = SymmetricMatrix::from_upper(4, |i, j| 0.5 * (a[(i, j)] + b[(i, j)]));
        let avg = 0.5 * (likelihood_loss(&a, &m) + likelihood_loss(&b, &m));
        let lm = likelihood_loss(&mid, &m);
        prop_assert!(lm <= avg + 1e-12);
        if norm_elementwise_inf(&a.sub(&b)) > 1e-3 {
            prop_assert!(lm < avg);
        }
    }

    #[test]
    fn lda_decisions_ignore_positive_scaling_of_w(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rule = LdaRule {
            w: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
            anchor: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
            method: Method::Sclime,
            lambda: 0.1,
        };
        let scaled = LdaRule { w: rule.w.iter().map(|w| c * w).collect(), ..rule.clone() };
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            prop_assert_eq!(lda_predict(&rule, &x), lda_predict(&scaled, &x));
        }
    }

    #[test]
    fn recovery_rates_are_permutation_equivariant(seed in any::<u64>(), perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let est = SymmetricMatrix::from_upper(6, |i, j| if i == j { 1.0 } else if rng.random_bool(0.4) { rng.random_range(-1.0..1.0) } else { 0.0 });
        let edges: BTreeSet<(usize, usize)> = (0..6).flat_map(|i| (i + 1..6).map(move |j| (i, j))).filter(|_| rng.random_bool(0.3)).collect();
        let moved: BTreeSet<(usize, usize)> = edges.iter().map(|&(i, j)| (perm[i].min(perm[j]), perm[i].max(perm[j]))).collect();
        prop_assert_eq!(recovery_rates(&est, 1e-5, &edges), recovery_rates(&est.permuted(&perm), 1e-5, &moved));
    }

    #[test]
    fn classification_counts_add_up(truth in prop::collection::vec(0u8..2, 1..60), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let predicted: Vec<u8> = truth.iter().map(|_| u8::from(rng.random_bool(0.5))).collect();
        let r = classification_metrics(&truth, &predicted).unwrap();
        let n = truth.len();
        prop_assert_eq!(r.tp + r.tn + r.fp + r.fn_, n);
        prop_assert_eq!(r.misclassification, (r.fp + r.fn_) as f64 / n as f64);
        prop_assert!((0.0..=1.0).contains(&r.specificity) && (0.0..=1.0).contains(&r.sensitivity));
        prop_assert!((-1.0..=1.0).contains(&r.mcc));
    }

    #[test]
    fn contamination_touches_exactly_ceil_nr_per_column(seed in any::<u64>(), n in 1usize..40, r in 0.0f64..0.99) {
        let data = normal_data(seed, n, 3);
        let out = contaminate(&data, r, 1e6, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let k = contamination_count(n, r);
        prop_assert_eq!(k, ((n as f64 * r) - 1e-9).ceil().max(0.0) as usize);
        for j in 0..3 {
            let mut changed = 0;
            for i in 0..n {
                if out.get(i, j) != data.get(i, j) {
                    changed += 1;
                    prop_assert_eq!(out.get(i, j).abs(), 1e6);
                }
            }
            prop_assert_eq!(changed, k);
        }
    }
}

proptest! {
    #![proptest_config(cases(12))]

    #[test]
    fn selection_is_deterministic_and_scale_free(seed in any::<u64>(), k in -3i32..4) {
        let train = normal_data(seed, 40, 5);
        let valid = normal_data(seed.wrapping_add(1), 40, 5);
        let grid = lambda_grid(0.01, 1.0, 12, Spacing::Log).unwrap();
        let cfg = SolverConfig::default();
        let c = 2f64.powi(k);
        for method in [Method::Sclime, Method::Sglasso] {
            let a = select_lambda_validation(&train, &valid, method, &grid, &cfg).unwrap();
            let b = select_lambda_validation(&train, &valid, method, &grid, &cfg).unwrap();
            prop_assert_eq!(a.lambda.to_bits(), b.lambda.to_bits());
            prop_assert!(a.estimate.matrix.as_slice().iter().zip(b.estimate.matrix.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
            let s = select_lambda_validation(&train.scaled(c), &valid.scaled(c), method, &grid, &cfg).unwrap();
            prop_assert_eq!(a.lambda, s.lambda);
        }
    }

    #[test]
    fn execution_mode_does_not_change_estimates(seed in any::<u64>()) {
        let data = normal_data(seed, 30, 6);
        let seq = SolverConfig { exec: Execution::Sequential, ..SolverConfig::default() };
        let par = SolverConfig { exec: Execution::Parallel, ..SolverConfig::default() };
        for method in Method::ALL {
            let ms = input_matrix(method, &data, Execution::Sequential).unwrap();
            let mp = input_matrix(method, &data, Execution::Parallel).unwrap();
            prop_assert!(norm_elementwise_inf(&ms.sub(&mp)) <= 1e-12);
            let a = spatial_precision::estimators::fit(method, &ms, 0.1, &seq).unwrap();
            let b = spatial_precision::estimators::fit(method, &ms, 0.1, &par).unwrap();
            prop_assert!(a.matrix.as_slice().iter().zip(b.matrix.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn sclime_roc_starts_at_the_origin(seed in any::<u64>()) {
        let m = spd(seed, 5);
        let edges: BTreeSet<(usize, usize)> = [(0, 1), (1, 2), (3, 4)].into_iter().collect();
        let grid = lambda_grid(0.05, 1.0, 4, Spacing::Log).unwrap();
        let pts = roc_path_from_input(&m, &edges, Method::Sclime, &grid, 1e-5, &SolverConfig::default());
        let last = pts.last().unwrap();
        prop_assert_eq!(last.lambda, 1.0);
        prop_assert_eq!((last.tpr, last.fpr), (Some(0.0), Some(0.0)));
    }
}
