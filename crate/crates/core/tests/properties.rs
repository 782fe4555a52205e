use proptest::prelude::*;
use sparse_ou::eval::{deviation_bounds, score_patterns, support_report};
use sparse_ou::linops::{solve_lyapunov, SquareMatrix};
use sparse_ou::model::{generate_shifted_antisymmetric, generate_sparse_drift, SparsityPattern};
use sparse_ou::modelsel::{log_grid, split_index, split_trajectory};
use sparse_ou::seed::{replication_seed, stream_seed};
use sparse_ou::sim::{sample_trajectory, subsample};
use sparse_ou::stats::{neg_log_likelihood, sufficient_stats};
use sparse_ou::{error_report, lasso, mle, soft_threshold, Drift32, Matrix, Options, Path, Stats32};

fn matrix(dim: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-5.0f64..5.0, dim * dim).prop_map(move |v| SquareMatrix::from_row_major(dim, v).unwrap())
}

fn sized_matrix() -> impl Strategy<Value = Matrix> {
    (1usize..6).prop_flat_map(matrix)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn soft_threshold_shrinks_toward_zero(m in sized_matrix(), t in 0.0f64..3.0) {
        let thr = SquareMatrix::from_fn(m.dim(), |_, _| t);
        let out = soft_threshold(&m, &thr).unwrap();
        for (&x, &y) in m.as_slice().iter().zip(out.as_slice()) {
            prop_assert!(y.abs() <= x.abs());
            prop_assert!(y == 0.0 || y.signum() == x.signum());
            prop_assert!((x.abs() - y.abs() - t.min(x.abs())).abs() < 1e-12);
        }
    }

    #[test]
    fn support_counts_are_consistent(m in sized_matrix(), tol in 0.0f64..3.0) {
        let truth = m.map(|v| if v.abs() > 2.5 { v } else { 0.0 });
        let r = support_report(&m, &truth, tol).unwrap();
        let detected = SparsityPattern::of_matrix(&m, tol);
        let actual = SparsityPattern::of_matrix(&truth, 0.0);
        prop_assert_eq!(r.true_positives + r.false_positives, detected.len());
        prop_assert_eq!(r.true_positives + r.false_negatives, actual.len());
        prop_assert!((0.0..=1.0).contains(&r.f1));
        prop_assert!(r.f1 <= r.precision.max(r.recall) + 1e-15);
        prop_assert_eq!(detected.row_counts().iter().sum::<usize>(), detected.len());
        let self_score = score_patterns(&actual, &actual);
        prop_assert!(actual.is_empty() || self_score.f1 == 1.0);
    }

    #[test]
    fn error_report_norm_identities(seed in any::<u64>(), d in 2usize..5) {
        let truth = generate_sparse_drift::<f64>(d, 2.min(d), seed).unwrap();
        let stats = sufficient_stats(&sample_trajectory(&truth, 5.0, 0.05, seed, None).unwrap()).unwrap();
        let est = mle(&stats).unwrap().matrix;
        let r = error_report(&est, &truth, &stats, &[1.0, 1.5, 2.0]).unwrap();
        let delta = &est - truth.matrix();
        prop_assert!((r.l1 - delta.l1_norm()).abs() <= 1e-12 * r.l1.max(1.0));
        prop_assert!((r.lq[0].1 - r.l1).abs() <= 1e-10 * r.l1.max(1.0));
        prop_assert!((r.lq[2].1 - r.frobenius).abs() <= 1e-10 * r.frobenius.max(1.0));
        // l_q norms decrease in q
        prop_assert!(r.lq[0].1 + 1e-12 >= r.lq[1].1 && r.lq[1].1 + 1e-12 >= r.lq[2].1);
        prop_assert!(r.empirical >= 0.0);
    }

    #[test]
    fn deviation_bounds_increase_with_radius(r1 in 1e-3f64..0.3, extra in 1e-3f64..0.3) {
        let drift = generate_shifted_antisymmetric::<f64>(3, 0.5, 1.0, 1, 0).unwrap();
        let u = [0.6, 0.8, 0.0];
        let (a1, a2) = deviation_bounds(r1, &u, drift.stationary_cov()).unwrap();
        let (b1, b2) = deviation_bounds(r1 + extra, &u, drift.stationary_cov()).unwrap();
        prop_assert!(b1 > a1);
        prop_assert!(b2 > a2 || b2.is_infinite());
        prop_assert!(a1 <= a2);
    }

    #[test]
    fn sampling_is_a_function_of_the_seed(seed in any::<u64>()) {
        let drift = generate_sparse_drift::<f64>(3, 2, seed).unwrap();
        let a = sample_trajectory(&drift, 1.0, 0.1, seed, None).unwrap();
        let b = sample_trajectory(&drift, 1.0, 0.1, seed, None).unwrap();
        prop_assert_eq!(a.as_flat(), b.as_flat());
        prop_assert_ne!(replication_seed(seed, 0), replication_seed(seed, 1));
        prop_assert_ne!(stream_seed(seed, 0), stream_seed(seed, 1));
    }

    #[test]
    fn matrix_json_round_trip(m in sized_matrix()) {
        let text = serde_json::to_string(&m).unwrap();
        let back: Matrix = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn lyapunov_residual_is_small(seed in any::<u64>(), d in 1usize..8) {
        let drift = generate_sparse_drift::<f64>(d, 1.max(d / 2), seed).unwrap();
        let a = drift.matrix();
        let c = solve_lyapunov(a).unwrap();
        let lhs = &a.matmul(&c) + &c.matmul(&a.transpose());
        let resid = (&lhs - &SquareMatrix::identity(d)).frobenius_norm();
        prop_assert!(resid / d as f64 <= 1e-10);
    }

    #[test]
    fn lasso_objective_never_exceeds_zero_start(seed in any::<u64>(), lambda in 0.0f64..2.0) {
        let truth = generate_sparse_drift::<f64>(4, 2, seed).unwrap();
        let stats = sufficient_stats(&sample_trajectory(&truth, 10.0, 0.05, seed, None).unwrap()).unwrap();
        let fit = lasso(&stats, lambda, None, &Options::default()).unwrap();
        let objective = neg_log_likelihood(&fit.matrix, &stats).unwrap() + lambda * fit.matrix.l1_norm();
        prop_assert!(objective <= neg_log_likelihood(&SquareMatrix::zeros(4), &stats).unwrap() + 1e-12);
        prop_assert!((objective - fit.final_objective).abs() <= 1e-9 * objective.abs().max(1.0));
    }

    #[test]
    fn log_grid_is_increasing(lo in 1e-4f64..1.0, span in 1.0f64..1e4, n in 2usize..50) {
        let g = log_grid(lo, lo * span, n).unwrap();
        prop_assert_eq!(g.len(), n);
        prop_assert!(g.windows(2).all(|w| w[0] < w[1]));
        prop_assert!((g[0] - lo).abs() <= 1e-12 * lo && (g[n - 1] - lo * span).abs() <= 1e-9 * lo * span);
    }

    #[test]
    fn split_shares_the_boundary_state(steps in 5usize..200) {
        let states: Vec<Vec<f64>> = (0..=steps).map(|k| vec![k as f64, -(k as f64)]).collect();
        let traj = Path::from_states(0.1, &states).unwrap();
        let (train, valid) = split_trajectory(&traj).unwrap();
        let cut = split_index(steps);
        prop_assert_eq!(train.steps() + valid.steps(), steps);
        prop_assert_eq!(train.state(cut), valid.state(0));
        prop_assert_eq!(train.steps(), cut);
    }
}

#[test]
fn single_precision_matches_double() {
    let drift = generate_sparse_drift::<f32>(4, 2, 9).unwrap();
    let _: &Drift32 = &drift;
    let traj = sample_trajectory(&drift, 20.0f32, 0.05, 9, None).unwrap();
    let stats: Stats32 = sufficient_stats(&traj).unwrap();
    let fit = lasso(&stats, 0.05f32, None, &Default::default()).unwrap();
    assert!(fit.matrix.is_finite());

    let wide = Path::new(4, 0.05, traj.as_flat().iter().map(|&x| x as f64).collect()).unwrap();
    let single = mle(&stats).unwrap().matrix.cast::<f64>();
    let double = mle(&sufficient_stats(&wide).unwrap()).unwrap().matrix;
    assert!((&single - &double).frobenius_norm() <= 1e-3 * double.frobenius_norm());
}

#[test]
fn trajectory_csv_round_trip_through_a_file() {
    let drift = generate_sparse_drift::<f64>(3, 2, 4).unwrap();
    let traj = sample_trajectory(&drift, 2.0, 0.01, 4, None).unwrap();
    let mut file = tempfile::NamedTempFile::new().unwrap();
    traj.write_csv(&mut file).unwrap();
    let back = Path::read_csv(std::io::BufReader::new(file.reopen().unwrap())).unwrap();
    assert_eq!(back.as_flat(), traj.as_flat());
    assert!((back.dt() - traj.dt()).abs() < 1e-15);

    let coarse = subsample(&traj, 10).unwrap();
    assert_eq!(coarse.steps(), 20);
    assert_eq!(coarse.state(3), traj.state(30));
}
