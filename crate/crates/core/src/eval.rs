//! Error metrics, support scoring and diagnostics of the theoretical
//! guarantees.

use log::warn;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::estimators::{lasso, SolverOptions};
use crate::linops::{symmetric_eigenvalues, SquareMatrix};
use crate::model::{DriftMatrix, SparsityPattern};
use crate::scalar::Scalar;
use crate::seed::{replication_seed, rng_from_seed};
use crate::sim::sample_trajectory;
use crate::stats::{sufficient_stats, theoretical_lambda, LambdaConfig, SufficientStats};

/// Default detection threshold for support scoring.
pub const DEFAULT_ZERO_TOL: f64 = 1e-10;

/// Largest dimension for which every `s`-support is enumerated.
pub const RESTRICTED_ENUMERATION_MAX_DIM: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorReport<T> {
    pub l1: T,
    pub frobenius: T,
    /// `(q, ||Delta||_q)` pairs.
    pub lq: Vec<(T, T)>,
    /// `sqrt(tr(Delta C Delta^T))`.
    pub empirical: T,
}

pub fn error_report<T: Scalar>(
    estimate: &SquareMatrix<T>,
    truth: &DriftMatrix<T>,
    stats: &SufficientStats<T>,
    qs: &[T],
) -> Result<ErrorReport<T>> {
    estimate.check_same_dim(truth.matrix(), "error_report")?;
    estimate.check_same_dim(&stats.c_hat, "error_report")?;
    if let Some(q) = qs.iter().find(|&&q| !(q >= T::one() && q <= T::of(2.0))) {
        return invalid(format!("q = {q} is outside [1, 2]"));
    }
    let delta = estimate - truth.matrix();
    let lq = qs
        .iter()
        .map(|&q| {
            let sum: T = delta.as_slice().iter().map(|v| v.abs().powf(q)).sum();
            (q, sum.powf(T::one() / q))
        })
        .collect();
    let quad = delta.matmul(&stats.c_hat).inner(&delta);
    Ok(ErrorReport {
        l1: delta.l1_norm(),
        frobenius: delta.frobenius_norm(),
        lq,
        empirical: quad.max(T::zero()).sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupportReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Scores the entries of `estimate` with `|value| > zero_tol` against the
/// nonzero entries of the truth. Undefined precision, recall or F1 are 0.
pub fn support_report<T: Scalar>(
    estimate: &SquareMatrix<T>,
    truth: &SquareMatrix<T>,
    zero_tol: T,
) -> Result<SupportReport> {
    estimate.check_same_dim(truth, "support_report")?;
    if !(zero_tol >= T::zero()) {
        return invalid("zero_tol must be non-negative");
    }
    let detected = SparsityPattern::of_matrix(estimate, zero_tol);
    let actual = SparsityPattern::of_matrix(truth, T::zero());
    Ok(score_patterns(&detected, &actual))
}

pub fn score_patterns(detected: &SparsityPattern, actual: &SparsityPattern) -> SupportReport {
    let tp = detected.support.intersection(&actual.support).count();
    let fp = detected.len() - tp;
    let fn_ = actual.len() - tp;
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    SupportReport { true_positives: tp, false_positives: fp, false_negatives: fn_, precision, recall, f1 }
}

/// F1 of an all-dense estimate when the truth has `s` nonzeros per row.
pub fn dense_baseline_f1(s: usize, d: usize) -> f64 {
    let rho = s as f64 / d as f64;
    2.0 * rho / (1.0 + rho)
}

/// Exponents `(H1(R), H2(R))` of the deviation inequalities for the
/// direction `u`. `H2` is infinite once `R >= u^T C u`.
pub fn deviation_bounds<T: Scalar>(r: T, u: &[T], c_inf: &SquareMatrix<T>) -> Result<(T, T)> {
    if !(r > T::zero()) {
        return invalid("R must be positive");
    }
    if u.len() != c_inf.dim() {
        return invalid("direction length does not match the covariance");
    }
    let norm = u.iter().map(|&x| x * x).sum::<T>().sqrt();
    if !(norm <= T::one() + T::of(1e-12)) {
        return invalid("direction must satisfy ||u||_2 <= 1");
    }
    let q = c_inf.quadratic_form(u);
    if !(q > T::zero()) {
        return invalid("u^T C u must be positive");
    }
    let x = r / q;
    let eighth = T::of(0.125);
    // log det(I + R C u u^T / q^2) = log(1 + R / q)
    let h1 = eighth * (x - x.ln_1p());
    let h2 = if x < T::one() { -eighth * (x + (-x).ln_1p()) } else { T::infinity() };
    Ok((h1, h2))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReConstant<T> {
    /// Minimum of `sqrt(u^T C u)` over the random cone probes.
    pub probe: T,
    /// Minimum over all `s`-supports of `sqrt(lambda_min(C_SS))`, for small `d`.
    pub restricted: Option<T>,
    /// `sqrt(lambda_min(C))`, a lower bound on the whole cone.
    pub global: T,
}

/// Randomised estimate of the restricted eigenvalue constant over the cone
/// `{u : ||u||_1 <= (1 + c0) ||u_{I_s(u)}||_1}`.
///
/// Each probe is an `s`-sparse Gaussian vector plus a dense tail with
/// random signs, no tail entry larger than the smallest head entry, scaled
/// so the cone constraint is tight whenever the bound on the tail allows it.
pub fn re_constant<T: Scalar>(
    stats: &SufficientStats<T>,
    s: usize,
    c0: T,
    n_probes: usize,
    seed: u64,
) -> Result<ReConstant<T>> {
    let d = stats.dim;
    if s == 0 || s > d {
        return invalid("s must lie in 1..=d");
    }
    if !(c0 > T::zero()) {
        return invalid("c0 must be positive");
    }
    if n_probes == 0 {
        return invalid("need at least one probe");
    }
    let c = &stats.c_hat;
    let mut rng = rng_from_seed(seed);
    let mut best = T::infinity();
    let mut u = vec![T::zero(); d];
    for _ in 0..n_probes {
        u.iter_mut().for_each(|v| *v = T::zero());
        let head = sample(&mut rng, d, s).into_vec();
        for &j in &head {
            let z: f64 = rng.sample(StandardNormal);
            u[j] = T::of(z);
        }
        let head_l1: T = head.iter().map(|&j| u[j].abs()).sum();
        let head_min = head.iter().map(|&j| u[j].abs()).fold(T::infinity(), T::min);
        if s < d {
            let mut tail_l1 = T::zero();
            let mut tail_max = T::zero();
            for (j, v) in u.iter_mut().enumerate() {
                if head.contains(&j) {
                    continue;
                }
                let mag: f64 = rng.gen();
                let sign = if rng.gen::<bool>() { T::one() } else { -T::one() };
                *v = sign * T::of(mag);
                tail_l1 += T::of(mag);
                tail_max = tail_max.max(T::of(mag));
            }
            if tail_l1 > T::zero() {
                let scale = (c0 * head_l1 / tail_l1).min(head_min / tail_max);
                for (j, v) in u.iter_mut().enumerate() {
                    if !head.contains(&j) {
                        *v *= scale;
                    }
                }
            }
        }
        let norm2: T = u.iter().map(|&x| x * x).sum();
        if norm2 > T::zero() {
            best = best.min((c.quadratic_form(&u) / norm2).max(T::zero()).sqrt());
        }
    }

    let restricted = if d <= RESTRICTED_ENUMERATION_MAX_DIM { Some(restricted_minimum(c, s)?) } else { None };
    let global = symmetric_eigenvalues(c)?[0].max(T::zero()).sqrt();
    Ok(ReConstant { probe: best, restricted, global })
}

/// `min_{|S| = s} sqrt(lambda_min(C_SS))` by enumeration.
pub fn restricted_minimum<T: Scalar>(c: &SquareMatrix<T>, s: usize) -> Result<T> {
    let d = c.dim();
    if s == 0 || s > d {
        return invalid("s must lie in 1..=d");
    }
    let mut idx: Vec<usize> = (0..s).collect();
    let mut best = T::infinity();
    loop {
        let lo = symmetric_eigenvalues(&c.principal_submatrix(&idx))?[0];
        best = best.min(lo.max(T::zero()).sqrt());
        // next combination in lexicographic order
        let mut k = s;
        while k > 0 && idx[k - 1] == d - s + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        idx[k - 1] += 1;
        for m in k..s {
            idx[m] = idx[m - 1] + 1;
        }
    }
    Ok(best)
}

/// `sqrt(sigma_min(C) / 2)`.
pub fn oracle_kappa<T: Scalar>(c_inf: &SquareMatrix<T>) -> Result<T> {
    let lo = symmetric_eigenvalues(c_inf)?[0];
    Ok((lo.max(T::zero()) / T::of(2.0)).sqrt())
}

/// Right-hand side `(1 + gamma) / (gamma kappa) * lambda * sqrt(d s)` of the
/// empirical-norm oracle inequality.
pub fn oracle_bound<T: Scalar>(gamma: T, kappa: T, lambda: T, d: usize, s: usize) -> T {
    (T::one() + gamma) / (gamma * kappa) * lambda * T::of_usize(d * s).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Coverage<T> {
    pub fraction: f64,
    pub hits: usize,
    pub reps: usize,
    pub kappa: T,
    /// False when the truth is not symmetric, outside the proven setting.
    pub symmetric_truth: bool,
    pub errors: Vec<T>,
    pub bounds: Vec<T>,
}

/// Fraction of replications in which the Lasso at the theoretical penalty
/// satisfies the empirical-norm oracle inequality.
#[allow(clippy::too_many_arguments)]
pub fn oracle_coverage<T: Scalar>(
    truth: &DriftMatrix<T>,
    s: usize,
    horizon: T,
    dt: T,
    reps: usize,
    cfg: &LambdaConfig<T>,
    opts: &SolverOptions<T>,
    seed: u64,
) -> Result<Coverage<T>> {
    if reps == 0 {
        return invalid("reps must be at least 1");
    }
    let d = truth.dim();
    if s == 0 || s > d {
        return invalid("s must lie in 1..=d");
    }
    let symmetric_truth = truth.is_symmetric();
    if !symmetric_truth {
        warn!("oracle coverage requested for a non-symmetric drift; the bound is only proven for symmetric drifts");
    }
    let kappa = oracle_kappa(truth.stationary_cov())?;
    let runs: Vec<(T, T)> = (0..reps)
        .into_par_iter()
        .map(|i| -> Result<(T, T)> {
            let traj = sample_trajectory(truth, horizon, dt, replication_seed(seed, i as u64), None)?;
            let stats = sufficient_stats(&traj)?;
            let lambda = theoretical_lambda(&stats, cfg)?;
            let fit = lasso(&stats, lambda, None, opts)?;
            let delta = &fit.matrix - truth.matrix();
            let err = delta.matmul(&stats.c_hat).inner(&delta).max(T::zero()).sqrt();
            Ok((err, oracle_bound(cfg.gamma, kappa, lambda, d, s)))
        })
        .collect::<Result<_>>()?;
    let hits = runs.iter().filter(|(e, b)| e <= b).count();
    Ok(Coverage {
        fraction: hits as f64 / reps as f64,
        hits,
        reps,
        kappa,
        symmetric_truth,
        errors: runs.iter().map(|r| r.0).collect(),
        bounds: runs.iter().map(|r| r.1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_two_group;
    use approx::assert_relative_eq;

    fn stats_with_c(c: SquareMatrix<f64>) -> SufficientStats<f64> {
        let d = c.dim();
        SufficientStats::new(c, SquareMatrix::zeros(d), 1.0).unwrap()
    }

    #[test]
    fn error_report_identities() {
        let truth = generate_two_group::<f64>(4).unwrap();
        let est = truth.matrix().map(|v| v * 1.3 + 0.01);
        let stats = stats_with_c(SquareMatrix::from_diag(&[1.0, 2.0, 0.5, 1.5]));
        let rep = error_report(&est, &truth, &stats, &[1.0, 1.5, 2.0]).unwrap();
        assert_relative_eq!(rep.lq[0].1, rep.l1, max_relative = 1e-12);
        assert_relative_eq!(rep.lq[2].1, rep.frobenius, max_relative = 1e-12);
        let q = 1.5;
        assert!(rep.lq[1].1.powf(q) <= rep.l1.powf(2.0 - q) * rep.frobenius.powf(2.0 * q - 2.0) * (1.0 + 1e-12));
        assert!(rep.empirical >= 0.5f64.sqrt() * rep.frobenius * (1.0 - 1e-12));
        assert!(error_report(&est, &truth, &stats, &[2.5]).is_err());
    }

    #[test]
    fn error_report_zero() {
        let truth = generate_two_group::<f64>(2).unwrap();
        let stats = stats_with_c(SquareMatrix::identity(2));
        let rep = error_report(truth.matrix(), &truth, &stats, &[1.0]).unwrap();
        assert_eq!((rep.l1, rep.frobenius, rep.empirical, rep.lq[0].1), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn support_scores() {
        let truth = SquareMatrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 1.0]]).unwrap();
        let perfect = support_report(&truth, &truth, 1e-10).unwrap();
        assert_eq!(perfect.f1, 1.0);
        let zero = support_report(&SquareMatrix::zeros(2), &truth, 1e-10).unwrap();
        assert_eq!((zero.precision, zero.recall, zero.f1), (0.0, 0.0, 0.0));
        assert_eq!(zero.false_negatives, 3);
        let est = SquareMatrix::from_rows(&[vec![1.0, 0.2], vec![0.0, 1e-12]]).unwrap();
        let r = support_report(&est, &truth, 1e-10).unwrap();
        assert_eq!((r.true_positives, r.false_positives, r.false_negatives), (1, 1, 2));
        assert_relative_eq!(r.f1, 2.0 * 0.5 * (1.0 / 3.0) / (0.5 + 1.0 / 3.0));
    }

    #[test]
    fn dense_baseline() {
        let d = 20;
        let truth = SquareMatrix::from_fn(d, |i, j| if j == i || j == (i + 1) % d { 1.0 } else { 0.0 });
        let dense = SquareMatrix::from_fn(d, |_, _| 1.0);
        let r = support_report(&dense, &truth, 1e-10).unwrap();
        assert!((r.f1 - 2.0 / 11.0).abs() < 1e-12);
        assert!((dense_baseline_f1(2, 20) - 2.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn deviation_bound_shape() {
        let c = SquareMatrix::<f64>::from_diag(&[1.0]);
        let (h1, h2) = deviation_bounds(1e-8, &[1.0], &c).unwrap();
        assert!(h1 < 1e-15 && h2 < 1e-15);
        assert!(deviation_bounds(1.0, &[1.0], &c).unwrap().1.is_infinite());
        assert!(deviation_bounds(0.0, &[1.0], &c).is_err());
        assert!(deviation_bounds(0.5, &[1.5], &c).is_err());
        let mut last = (0.0, 0.0);
        for k in 1..100 {
            let r = k as f64 * 0.0099;
            let (a, b) = deviation_bounds(r, &[1.0], &c).unwrap();
            assert!(a >= 0.0 && b >= 0.0);
            assert!(a > last.0 && b > last.1);
            last = (a, b);
        }
    }

    #[test]
    fn deviation_bound_values() {
        // C = [1], u = [1], R = 1/2: (1/2 - ln 1.5)/8 and -(1/2 + ln 0.5)/8
        let c = SquareMatrix::<f64>::from_diag(&[1.0]);
        let (h1, h2) = deviation_bounds(0.5, &[1.0], &c).unwrap();
        assert_relative_eq!(h1, 0.011_816_861_486_479_452, max_relative = 1e-12);
        assert_relative_eq!(h2, 0.024_143_397_569_993_16, max_relative = 1e-12);
    }

    #[test]
    fn re_constant_identity() {
        let stats = stats_with_c(SquareMatrix::identity(6));
        let re = re_constant(&stats, 2, 1.0, 200, 3).unwrap();
        assert_relative_eq!(re.restricted.unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(re.probe, 1.0, max_relative = 1e-12);
        assert_relative_eq!(re.global, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn re_constant_coordinate_direction() {
        let eps = 0.04;
        let stats = stats_with_c(SquareMatrix::from_diag(&[eps, 1.0, 1.0, 1.0, 1.0]));
        let re = re_constant(&stats, 1, 1.0, 500, 4).unwrap();
        assert_relative_eq!(re.restricted.unwrap(), eps.sqrt(), max_relative = 1e-10);
        assert!(re.probe >= re.restricted.unwrap());
        assert!(re.global <= re.restricted.unwrap() + 1e-12);
    }

    #[test]
    fn restricted_enumeration_counts() {
        // the minimum over pairs of a tridiagonal matrix is the most coupled pair
        let c = SquareMatrix::from_rows(&[
            vec![1.0, 0.1, 0.0, 0.0],
            vec![0.1, 1.0, 0.6, 0.0],
            vec![0.0, 0.6, 1.0, 0.2],
            vec![0.0, 0.0, 0.2, 1.0],
        ])
        .unwrap();
        assert_relative_eq!(restricted_minimum(&c, 2).unwrap(), 0.4f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(restricted_minimum(&c, 1).unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn kappa_and_bound() {
        let c = SquareMatrix::from_diag(&[0.5, 2.0]);
        assert_relative_eq!(oracle_kappa(&c).unwrap(), 0.5);
        assert_relative_eq!(oracle_bound(2.0, 0.5, 0.1, 4, 1), 1.5 / 0.5 * 0.1 * 2.0);
    }
}
