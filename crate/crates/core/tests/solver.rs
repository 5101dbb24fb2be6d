use debias_core::estimators::estimate_class_counts;
use debias_core::generators::{gen_class_imbalance, ClassImbalanceConfig, SourceSizes};
use debias_core::harness::gaussian_pool;
use debias_core::model::DatasetCollection;
use debias_core::omega::{build_omega_matrix, OmegaMatrix};
use debias_core::rng;
use debias_core::solver::{gradient, overlap_graph, solve, strong_components, SolverConfig, SolverMode};
use rand::Rng;

fn class_imbalance(k: usize, m: usize, gamma: f64, per_source: usize, seed: u64) -> DatasetCollection {
    let pool = gaussian_pool(m, m, 0.35, 200, rng::derive_seed(seed, 1)).unwrap();
    let cfg = ClassImbalanceConfig {
        num_classes: m,
        num_sources: k,
        gamma,
        sizes: SourceSizes::Balanced { total: k * per_source }.resolve(k).unwrap(),
        seed: rng::derive_seed(seed, 2),
        class_order: None,
    };
    gen_class_imbalance(&cfg, &pool).unwrap().0
}

fn counts_omega(data: &DatasetCollection) -> OmegaMatrix {
    build_omega_matrix(&estimate_class_counts(data, 0.0).unwrap(), data).unwrap()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[test]
#[allow(clippy::needless_range_loop)]
fn ring_overlap_in_class_imbalance() {
    let data = class_imbalance(5, 10, 0.2, 2000, 11);
    let g = overlap_graph(&counts_omega(&data));
    // direct support intersection: source l samples classes where p_l > 0
    for k in 0..5 {
        let next = (k + 1) % 5;
        assert!(g[k][next] && g[next][k], "sources {k} and {next} must overlap");
    }
    assert_eq!(strong_components(&g), vec![vec![0, 1, 2, 3, 4]]);
}

#[test]
fn no_overlap_without_gamma() {
    let data = class_imbalance(5, 10, 0.0, 500, 3);
    let g = overlap_graph(&counts_omega(&data));
    assert_eq!(strong_components(&g).len(), 5);
}

fn random_connected(seed: u64) -> (OmegaMatrix, Vec<f64>) {
    let mut r = rng::stream(seed, 0);
    let k = r.random_range(2..=5);
    let n = r.random_range(50..400);
    let rows = (0..n)
        .map(|_| (0..k).map(|_| r.random_range(0.01..1.0)).collect())
        .collect();
    let sources: Vec<usize> = (0..n).map(|i| i % k).collect();
    let mut lambda = vec![0.0; k];
    for &s in &sources {
        lambda[s] += 1.0 / n as f64;
    }
    (OmegaMatrix::from_rows(rows, sources, (0..n).collect()).unwrap(), lambda)
}

fn assert_monotone(trace: &[debias_core::solver::TracePoint], what: &str) {
    for w in trace.windows(2) {
        assert!(
            w[1].objective <= w[0].objective + 1e-9,
            "{what}: objective rose from {} to {} at iteration {}",
            w[0].objective,
            w[1].objective,
            w[1].iteration
        );
    }
}

/// Without momentum. The Hessian's largest eigenvalue is at most 1/2, so
/// both steps lie below 2/L; heavy-ball momentum can overshoot.
#[test]
fn full_gradient_trace_is_monotone_without_momentum() {
    for lr in [1e-2, 1.0] {
        let cfg = SolverConfig {
            learning_rate: lr,
            momentum: 0.0,
            max_iters: 20_000,
            ..SolverConfig::full_gradient()
        };
        for seed in 0..10 {
            let (omega, lambda) = random_connected(seed);
            let res = solve(&omega, &lambda, &cfg).unwrap();
            assert_monotone(&res.trace, &format!("lr {lr}, random seed {seed}"));
        }
        for gamma in [0.05, 0.2, 0.5] {
            let data = class_imbalance(5, 10, gamma, 400, 7);
            let res = solve(&counts_omega(&data), &data.lambda(), &cfg).unwrap();
            assert_monotone(&res.trace, &format!("lr {lr}, class imbalance gamma {gamma}"));
        }
    }
}

#[test]
fn full_gradient_converges_to_stationary_point() {
    for seed in 0..10 {
        let (omega, lambda) = random_connected(100 + seed);
        let res = solve(&omega, &lambda, &SolverConfig::full_gradient()).unwrap();
        assert!(res.converged, "seed {seed}");
        assert_eq!(*res.w_hat.last().unwrap(), 1.0);
        assert!(res.w_hat.iter().all(|w| *w > 0.0));
        let g = gradient(&omega, &lambda, &res.u_hat).unwrap();
        assert!(max_abs(&g) <= 1e-8, "seed {seed}: {}", max_abs(&g));
    }
}

#[test]
fn minibatch_reaches_small_gradient_at_ten_thousand_rows() {
    // the final iterate keeps the noise of the last minibatches, so the
    // criterion is on the best traced point
    let data = class_imbalance(5, 10, 0.2, 2000, 21);
    assert_eq!(data.len(), 10_000);
    let omega = counts_omega(&data);
    let lambda = data.lambda();
    let cfg = SolverConfig {
        trace_every: 10,
        ..SolverConfig::minibatch(5)
    };
    assert_eq!(cfg.mode, SolverMode::Minibatch);
    let res = solve(&omega, &lambda, &cfg).unwrap();
    assert_eq!(res.iterations, 4000);
    let best = res.trace.iter().map(|t| t.grad_norm).fold(f64::INFINITY, f64::min);
    assert!(best < 1e-3, "best traced gradient norm {best:e}");
}

#[test]
fn solve_is_reproducible_and_thread_independent() {
    let data = class_imbalance(5, 10, 0.2, 2000, 4);
    let omega = counts_omega(&data);
    let lambda = data.lambda();
    let run = |threads: usize, cfg: &SolverConfig| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| solve(&omega, &lambda, cfg).unwrap())
    };
    for cfg in [SolverConfig::full_gradient(), SolverConfig::minibatch(9)] {
        let a = run(1, &cfg);
        let b = run(4, &cfg);
        let c = run(4, &cfg);
        assert_eq!(a, b);
        assert_eq!(b, c);
    }
}
