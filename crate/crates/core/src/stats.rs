//! Sufficient statistics of a path, the negative log-likelihood and the
//! theory-driven penalty level.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::linops::SquareMatrix;
use crate::scalar::Scalar;
use crate::sim::Trajectory;

/// `C = (1/T) int X X^T dt` and `G = (1/T) int dX X^T`, discretised with
/// left endpoints.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SufficientStats<T> {
    pub c_hat: SquareMatrix<T>,
    pub g_hat: SquareMatrix<T>,
    pub horizon: T,
    pub dim: usize,
}

impl<T: Scalar> SufficientStats<T> {
    pub fn new(c_hat: SquareMatrix<T>, g_hat: SquareMatrix<T>, horizon: T) -> Result<Self> {
        c_hat.check_same_dim(&g_hat, "sufficient statistics")?;
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return invalid("horizon must be positive");
        }
        let dim = c_hat.dim();
        Ok(Self { c_hat: c_hat.symmetrize(), g_hat, horizon, dim })
    }

    /// `diag(C)`.
    pub fn diag_c(&self) -> Vec<T> {
        self.c_hat.diag()
    }
}

/// Itô (left-point) sums; `Ĉ` is symmetrised.
pub fn sufficient_stats<T: Scalar>(traj: &Trajectory<T>) -> Result<SufficientStats<T>> {
    sufficient_stats_centered(traj, None)
}

/// As [`sufficient_stats`] after subtracting `mean` from every state
/// (increments are unaffected).
pub fn sufficient_stats_centered<T: Scalar>(traj: &Trajectory<T>, mean: Option<&[T]>) -> Result<SufficientStats<T>> {
    if traj.len() < 2 {
        return invalid("sufficient statistics need at least two states");
    }
    let d = traj.dim();
    if let Some(m) = mean {
        if m.len() != d {
            return invalid("mean vector length does not match the trajectory");
        }
    }
    let n = traj.steps();
    let mut c = vec![T::zero(); d * d];
    let mut g = vec![T::zero(); d * d];
    let mut x = vec![T::zero(); d];
    let mut dx = vec![T::zero(); d];
    for k in 0..n {
        let cur = traj.state(k);
        let next = traj.state(k + 1);
        for i in 0..d {
            x[i] = match mean {
                Some(m) => cur[i] - m[i],
                None => cur[i],
            };
            dx[i] = next[i] - cur[i];
        }
        for i in 0..d {
            let xi = x[i];
            let dxi = dx[i];
            let c_row = &mut c[i * d..(i + 1) * d];
            for (cij, &xj) in c_row.iter_mut().zip(&x) {
                *cij += xi * xj;
            }
            let g_row = &mut g[i * d..(i + 1) * d];
            for (gij, &xj) in g_row.iter_mut().zip(&x) {
                *gij += dxi * xj;
            }
        }
    }
    let horizon = traj.horizon();
    let dt = traj.dt();
    let c = SquareMatrix::from_row_major(d, c.into_iter().map(|v| v * dt / horizon).collect())?;
    let g = SquareMatrix::from_row_major(d, g.into_iter().map(|v| v / horizon).collect())?;
    SufficientStats::new(c, g, horizon)
}

/// `<A, G> + tr(A C A^T) / 2`.
pub fn neg_log_likelihood<T: Scalar>(a: &SquareMatrix<T>, stats: &SufficientStats<T>) -> Result<T> {
    a.check_same_dim(&stats.c_hat, "neg_log_likelihood")?;
    Ok(a.inner(&stats.g_hat) + T::of(0.5) * a.matmul(&stats.c_hat).inner(a))
}

/// Gradient `G + A C`.
pub fn grad_neg_log_likelihood<T: Scalar>(a: &SquareMatrix<T>, stats: &SufficientStats<T>) -> Result<SquareMatrix<T>> {
    a.check_same_dim(&stats.c_hat, "grad_neg_log_likelihood")?;
    Ok(&stats.g_hat + &a.matmul(&stats.c_hat))
}

/// Likelihood under diffusion `S S^T = P^{-1}`:
/// `<P G, A> + tr(P A C A^T) / 2`.
pub fn weighted_neg_log_likelihood<T: Scalar>(
    a: &SquareMatrix<T>,
    stats: &SufficientStats<T>,
    precision: &SquareMatrix<T>,
) -> Result<T> {
    a.check_same_dim(&stats.c_hat, "weighted_neg_log_likelihood")?;
    a.check_same_dim(precision, "weighted_neg_log_likelihood")?;
    let pa = precision.matmul(a);
    Ok(pa.inner(&stats.g_hat) + T::of(0.5) * pa.matmul(&stats.c_hat).inner(a))
}

/// Gradient `P (G + A C)`.
pub fn grad_weighted_neg_log_likelihood<T: Scalar>(
    a: &SquareMatrix<T>,
    stats: &SufficientStats<T>,
    precision: &SquareMatrix<T>,
) -> Result<SquareMatrix<T>> {
    Ok(precision.matmul(&grad_neg_log_likelihood(a, stats)?))
}

/// Parameters of the theoretical penalty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LambdaConfig<T> {
    pub gamma: T,
    pub epsilon0: T,
    pub tau: T,
}

impl<T: Scalar> LambdaConfig<T> {
    pub fn new(gamma: T, epsilon0: T, tau: T) -> Result<Self> {
        if !(gamma > T::one()) {
            return invalid("gamma must exceed 1");
        }
        if !(epsilon0 > T::zero() && epsilon0 < T::one()) {
            return invalid("epsilon0 must lie in (0, 1)");
        }
        if !(tau >= T::zero() && tau < gamma - T::one()) {
            return invalid("tau must lie in [0, gamma - 1)");
        }
        Ok(Self { gamma, epsilon0, tau })
    }

    /// `x = log(2 pi^2 d^2 / (3 epsilon0)) / 2`, the deviation level for
    /// which `lambda_T = gamma * theta(x)`.
    pub fn deviation_level(&self, d: usize) -> T {
        let d = T::of_usize(d);
        let pi2 = T::PI() * T::PI();
        T::of(0.5) * (T::of(2.0) * pi2 * d * d / (T::of(3.0) * self.epsilon0)).ln()
    }
}

impl<T: Scalar> Default for LambdaConfig<T> {
    fn default() -> Self {
        Self { gamma: T::of(2.0), epsilon0: T::of(0.1), tau: T::zero() }
    }
}

/// `sqrt(4e/T |diag C|_inf (x + log(2 + |log(T diag C)|_inf)))`.
pub fn theta<T: Scalar>(x: T, stats: &SufficientStats<T>) -> Result<T> {
    if !(x > T::zero()) {
        return invalid("theta requires x > 0");
    }
    let delta = stats.diag_c();
    if delta.iter().any(|&v| !(v > T::zero())) {
        return invalid("diagonal of the empirical covariance must be strictly positive");
    }
    let t = stats.horizon;
    let delta_max = delta.iter().fold(T::zero(), |m, &v| m.max(v));
    let log_max = delta.iter().fold(T::zero(), |m, &v| m.max((t * v).ln().abs()));
    let four_e = T::of(4.0) * T::E();
    Ok((four_e / t * delta_max * (x + (T::of(2.0) + log_max).ln())).sqrt())
}

/// Penalty level guaranteeing the oracle inequality with probability
/// `1 - epsilon0`.
pub fn theoretical_lambda<T: Scalar>(stats: &SufficientStats<T>, cfg: &LambdaConfig<T>) -> Result<T> {
    Ok(cfg.gamma * theta(cfg.deviation_level(stats.dim), stats)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn stats_1d(c: f64, g: f64, t: f64) -> SufficientStats<f64> {
        SufficientStats::new(SquareMatrix::from_diag(&[c]), SquareMatrix::from_diag(&[g]), t).unwrap()
    }

    #[test]
    fn constant_path() {
        let traj = Trajectory::from_states(0.5, &vec![vec![1.0, -2.0]; 5]).unwrap();
        let s = sufficient_stats(&traj).unwrap();
        assert_eq!(s.c_hat.as_slice(), &[1.0, -2.0, -2.0, 4.0]);
        assert_eq!(s.g_hat, SquareMatrix::zeros(2));
        assert_eq!(s.horizon, 2.0);
    }

    #[test]
    fn two_point_path() {
        let traj = Trajectory::from_states(1.0, &[vec![1.0], vec![2.0]]).unwrap();
        let s = sufficient_stats(&traj).unwrap();
        assert_eq!(s.c_hat.as_slice(), &[1.0]);
        assert_eq!(s.g_hat.as_slice(), &[1.0]);
    }

    #[test]
    fn likelihood_scalar_cases() {
        let s = stats_1d(2.0, -0.5, 1.0);
        assert_eq!(neg_log_likelihood(&SquareMatrix::zeros(1), &s).unwrap(), 0.0);
        let a = SquareMatrix::from_diag(&[3.0]);
        assert_relative_eq!(neg_log_likelihood(&a, &s).unwrap(), 3.0 * -0.5 + 9.0 * 2.0 / 2.0);
        assert_relative_eq!(grad_neg_log_likelihood(&a, &s).unwrap()[(0, 0)], -0.5 + 3.0 * 2.0);
    }

    #[test]
    fn likelihood_minimised_at_scalar_mle() {
        let s = stats_1d(0.8, -0.6, 1.0);
        let mle = 0.6 / 0.8;
        let at_mle = neg_log_likelihood(&SquareMatrix::from_diag(&[mle]), &s).unwrap();
        for k in -200..=200 {
            let a = mle + k as f64 * 0.01;
            assert!(neg_log_likelihood(&SquareMatrix::from_diag(&[a]), &s).unwrap() >= at_mle);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let s = stats_1d(1.0, 1.0, 1.0);
        assert!(neg_log_likelihood(&SquareMatrix::zeros(2), &s).is_err());
        assert!(grad_neg_log_likelihood(&SquareMatrix::zeros(2), &s).is_err());
    }

    #[test]
    fn theta_unit_case() {
        let s = stats_1d(1.0, 0.0, 1.0);
        for x in [0.1, 1.0, 3.0] {
            let expected = (4.0 * std::f64::consts::E * (x + 2f64.ln())).sqrt();
            assert_relative_eq!(theta(x, &s).unwrap(), expected, max_relative = 1e-14);
        }
        assert!(theta(0.0, &s).is_err());
        assert!(theta(1.0, &stats_1d(0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn lambda_regression_pin() {
        // Hand evaluation: d=1, delta=1, T=1, gamma=2, eps0=0.1:
        // 2*sqrt(4e*(0.5*ln(2 pi^2/0.3) + ln 2))
        let s = stats_1d(1.0, 0.0, 1.0);
        let cfg = LambdaConfig::new(2.0, 0.1, 0.0).unwrap();
        let inner = 0.5 * (2.0 * std::f64::consts::PI.powi(2) / 0.3f64).ln() + 2f64.ln();
        let expected = 2.0 * (4.0 * std::f64::consts::E * inner).sqrt();
        assert_relative_eq!(theoretical_lambda(&s, &cfg).unwrap(), expected, max_relative = 1e-14);
        assert_relative_eq!(theoretical_lambda(&s, &cfg).unwrap(), 11.008_593_896_205_3, max_relative = 1e-13);
    }

    #[test]
    fn lambda_scales_with_gamma_and_horizon() {
        let s = SufficientStats::new(SquareMatrix::from_diag(&[0.4, 0.7, 0.2]), SquareMatrix::zeros(3), 50.0).unwrap();
        let cfg2 = LambdaConfig::new(2.0, 0.1, 0.0).unwrap();
        let cfg3 = LambdaConfig::new(3.0, 0.1, 0.0).unwrap();
        let l2 = theoretical_lambda(&s, &cfg2).unwrap();
        assert_relative_eq!(theoretical_lambda(&s, &cfg3).unwrap(), 1.5 * l2, max_relative = 1e-14);
        let longer = SufficientStats { horizon: 100.0, ..s.clone() };
        assert!(theoretical_lambda(&longer, &cfg2).unwrap() < l2);
        let x = cfg2.deviation_level(3);
        assert_relative_eq!(l2, 2.0 * theta(x, &s).unwrap(), max_relative = 1e-14);
    }

    #[test]
    fn lambda_config_validation() {
        assert!(LambdaConfig::new(1.0, 0.1, 0.0).is_err());
        assert!(LambdaConfig::new(2.0, 1.0, 0.0).is_err());
        assert!(LambdaConfig::new(2.0, 0.1, 1.0).is_err());
        assert!(LambdaConfig::new(2.0, 0.1, 0.5).is_ok());
    }
}
