//! Maximum likelihood, Lasso and Adaptive Lasso estimators of the drift.
//!
//! The penalised problems
//!
//! ```text
//! min_A  <P G, A> + tr(P A C A^T) / 2 + lambda * sum_ij w_ij |A_ij|
//! ```
//!
//! (with `P = I` except for the diffusion-weighted model) are solved by
//! proximal gradient descent with step `1 / (||P|| ||C||)`, optionally with
//! FISTA momentum and function-value restarts. On exit the detected support
//! is refined by solving the KKT equations restricted to it; the refined
//! point is kept only when it certifies optimality (consistent signs, all
//! zero entries inside their subgradient bounds, no objective increase).

use serde::Serialize;

use crate::error::{invalid, OuError, Result};
use crate::linops::{symmetric_eigenvalues, Lu, SquareMatrix};
use crate::model::SparsityPattern;
use crate::scalar::Scalar;
use crate::sim::Trajectory;
use crate::stats::{sufficient_stats_centered, SufficientStats};

/// Largest admissible condition number of the empirical covariance.
pub const MAX_CONDITION: f64 = 1e12;

/// Cap on adaptive weights `|A_mle|^-gamma`.
pub const MAX_ADAPTIVE_WEIGHT: f64 = 1e12;

/// Largest support for which the coupled (diffusion-weighted) KKT refinement
/// is attempted.
const MAX_COUPLED_REFINE: usize = 900;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverOptions<T> {
    pub max_iters: usize,
    pub rel_tol: T,
    /// FISTA momentum with function-value restart.
    pub acceleration: bool,
    pub step_override: Option<T>,
    /// Solve the KKT system on the final support.
    pub refine_support: bool,
    /// Keep the objective value of every iterate in [`Estimate::objective_trace`].
    pub record_trace: bool,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            rel_tol: T::of(1e-8),
            acceleration: false,
            step_override: None,
            refine_support: true,
            record_trace: false,
        }
    }
}

impl<T: Scalar> SolverOptions<T> {
    pub fn accelerated() -> Self {
        Self { acceleration: true, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return invalid("max_iters must be at least 1");
        }
        if !(self.rel_tol > T::zero()) {
            return invalid("rel_tol must be positive");
        }
        if let Some(step) = self.step_override {
            if !(step > T::zero()) || !step.is_finite() {
                return invalid("step override must be positive and finite");
            }
        }
        Ok(())
    }
}

/// A fitted drift with solver diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct Estimate<T> {
    pub matrix: SquareMatrix<T>,
    pub lambda: T,
    pub gamma: Option<T>,
    #[serde(skip)]
    pub weights: Option<SquareMatrix<T>>,
    pub iterations: usize,
    pub final_objective: T,
    pub kkt_residual: T,
    pub converged: bool,
    pub support: SparsityPattern,
    #[serde(skip)]
    pub objective_trace: Vec<T>,
}

impl<T: Scalar> Estimate<T> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Entrywise `sign(m) max(|m| - t, 0)`.
pub fn soft_threshold<T: Scalar>(m: &SquareMatrix<T>, thresholds: &SquareMatrix<T>) -> Result<SquareMatrix<T>> {
    m.check_same_dim(thresholds, "soft_threshold")?;
    if thresholds.as_slice().iter().any(|&t| !(t >= T::zero())) {
        return invalid("soft_threshold: thresholds must be non-negative");
    }
    Ok(m.zip_map(thresholds, shrink))
}

#[inline]
fn shrink<T: Scalar>(v: T, t: T) -> T {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        T::zero()
    }
}

fn check_covariance<T: Scalar>(c: &SquareMatrix<T>) -> Result<()> {
    let eig = symmetric_eigenvalues(c)?;
    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
    let condition = if lo > T::zero() { (hi / lo).as_f64() } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(OuError::IllConditioned { condition, limit: MAX_CONDITION });
    }
    Ok(())
}

/// Unpenalised estimator `-G C^{-1}`, computed by a linear solve.
pub fn mle<T: Scalar>(stats: &SufficientStats<T>) -> Result<Estimate<T>> {
    check_covariance(&stats.c_hat)?;
    // A C = -G  <=>  C A^T = -G^T (C symmetric)
    let lu = Lu::new(&stats.c_hat)?;
    let a = lu.solve_mat(&(-&stats.g_hat.transpose())).transpose();
    let problem = Problem { stats, precision: None, lambda: T::zero(), weights: None };
    let grad = problem.gradient(&a);
    Ok(Estimate {
        support: SparsityPattern::of_matrix(&a, T::zero()),
        final_objective: problem.objective(&a),
        kkt_residual: grad.max_abs(),
        matrix: a,
        lambda: T::zero(),
        gamma: None,
        weights: None,
        iterations: 0,
        converged: true,
        objective_trace: Vec::new(),
    })
}

/// Lasso with optional entrywise weights, started from zero.
pub fn lasso<T: Scalar>(
    stats: &SufficientStats<T>,
    lambda: T,
    weights: Option<&SquareMatrix<T>>,
    opts: &SolverOptions<T>,
) -> Result<Estimate<T>> {
    fit_penalized(stats, None, lambda, weights, opts, None)
}

/// `|A_mle|^-gamma`, capped at [`MAX_ADAPTIVE_WEIGHT`].
pub fn adaptive_weights<T: Scalar>(mle: &SquareMatrix<T>, gamma: T) -> Result<SquareMatrix<T>> {
    if !(gamma > T::zero()) || !gamma.is_finite() {
        return invalid("adaptive lasso requires gamma > 0");
    }
    let cap = T::of(MAX_ADAPTIVE_WEIGHT);
    Ok(mle.map(|v| {
        let w = v.abs().powf(-gamma);
        if w.is_finite() {
            w.min(cap)
        } else {
            cap
        }
    }))
}

/// Adaptive Lasso: weights from the MLE, started at the MLE.
pub fn adaptive_lasso<T: Scalar>(
    stats: &SufficientStats<T>,
    lambda: T,
    gamma: T,
    opts: &SolverOptions<T>,
) -> Result<Estimate<T>> {
    let start = mle(stats)?;
    let weights = adaptive_weights(&start.matrix, gamma)?;
    let mut est = fit_penalized(stats, None, lambda, Some(&weights), opts, Some(&start.matrix))?;
    est.gamma = Some(gamma);
    Ok(est)
}

/// General penalised fit. `precision` is `(Sigma Sigma^T)^{-1}` for the
/// diffusion-weighted likelihood, `None` for unit diffusion; `init` defaults
/// to the zero matrix.
pub fn fit_penalized<T: Scalar>(
    stats: &SufficientStats<T>,
    precision: Option<&SquareMatrix<T>>,
    lambda: T,
    weights: Option<&SquareMatrix<T>>,
    opts: &SolverOptions<T>,
    init: Option<&SquareMatrix<T>>,
) -> Result<Estimate<T>> {
    opts.validate()?;
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return invalid("lambda must be finite and non-negative");
    }
    let d = stats.dim;
    if let Some(w) = weights {
        w.check_same_dim(&stats.c_hat, "lasso weights")?;
        if w.as_slice().iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
            return invalid("lasso weights must be positive and finite");
        }
    }
    if let Some(p) = precision {
        p.check_same_dim(&stats.c_hat, "precision")?;
    }
    if let Some(a0) = init {
        a0.check_same_dim(&stats.c_hat, "initial point")?;
    }
    let problem = Problem { stats, precision, lambda, weights };
    let step = match opts.step_override {
        Some(s) => s,
        None => T::one() / problem.lipschitz()?,
    };
    let thresholds = match weights {
        Some(w) => w.scale(step * lambda),
        None => SquareMatrix::from_fn(d, |_, _| step * lambda),
    };
    let prox_step = |base: &SquareMatrix<T>| -> SquareMatrix<T> {
        let grad = problem.gradient(base);
        let mut moved = base.clone();
        moved -= &grad.scale(step);
        moved.zip_map(&thresholds, shrink)
    };

    let mut x = init.cloned().unwrap_or_else(|| SquareMatrix::zeros(d));
    let mut f_prev = problem.objective(&x);
    let mut trace = Vec::new();
    if opts.record_trace {
        trace.push(f_prev);
    }
    let mut y = x.clone();
    let mut momentum = T::one();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iters {
        iterations = it;
        let base = if opts.acceleration { &y } else { &x };
        let mut next = prox_step(base);
        let mut f_next = problem.objective(&next);
        if opts.acceleration {
            if f_next > f_prev {
                // Restart from the last iterate with a plain step.
                next = prox_step(&x);
                f_next = problem.objective(&next);
                momentum = T::one();
                y = next.clone();
            } else {
                let m_next = (T::one() + (T::one() + T::of(4.0) * momentum * momentum).sqrt()) / T::of(2.0);
                let beta = (momentum - T::one()) / m_next;
                y = next.zip_map(&x, |a, b| a + beta * (a - b));
                momentum = m_next;
            }
        }
        if opts.record_trace {
            trace.push(f_next);
        }
        let change = (f_prev - f_next).abs();
        let scale = f_prev.abs().max(f_next.abs());
        x = next;
        f_prev = f_next;
        if change == T::zero() || change <= opts.rel_tol * scale {
            converged = true;
            break;
        }
    }

    if opts.refine_support {
        if let Some(refined) = problem.refine_on_support(&x) {
            let f_refined = problem.objective(&refined);
            if f_refined <= f_prev + T::of(1e-12) * f_prev.abs().max(T::one()) {
                x = refined;
                f_prev = f_refined;
            }
        }
    }

    Ok(Estimate {
        kkt_residual: problem.kkt_residual(&x),
        support: SparsityPattern::of_matrix(&x, T::zero()),
        final_objective: f_prev,
        matrix: x,
        lambda,
        gamma: None,
        weights: weights.cloned(),
        iterations,
        converged,
        objective_trace: trace,
    })
}

struct Problem<'a, T> {
    stats: &'a SufficientStats<T>,
    precision: Option<&'a SquareMatrix<T>>,
    lambda: T,
    weights: Option<&'a SquareMatrix<T>>,
}

impl<T: Scalar> Problem<'_, T> {
    fn weight(&self, i: usize, j: usize) -> T {
        self.weights.map_or(T::one(), |w| w[(i, j)])
    }

    fn smooth(&self, a: &SquareMatrix<T>) -> T {
        let pa = match self.precision {
            Some(p) => p.matmul(a),
            None => a.clone(),
        };
        pa.inner(&self.stats.g_hat) + T::of(0.5) * pa.matmul(&self.stats.c_hat).inner(a)
    }

    fn penalty(&self, a: &SquareMatrix<T>) -> T {
        if self.lambda == T::zero() {
            return T::zero();
        }
        let raw = match self.weights {
            Some(w) => a.as_slice().iter().zip(w.as_slice()).map(|(&x, &w)| w * x.abs()).sum(),
            None => a.l1_norm(),
        };
        self.lambda * raw
    }

    fn objective(&self, a: &SquareMatrix<T>) -> T {
        self.smooth(a) + self.penalty(a)
    }

    fn gradient(&self, a: &SquareMatrix<T>) -> SquareMatrix<T> {
        let g = &self.stats.g_hat + &a.matmul(&self.stats.c_hat);
        match self.precision {
            Some(p) => p.matmul(&g),
            None => g,
        }
    }

    fn lipschitz(&self) -> Result<T> {
        let c_norm = *symmetric_eigenvalues(&self.stats.c_hat)?.last().expect("dim >= 1");
        let p_norm = match self.precision {
            Some(p) => *symmetric_eigenvalues(p)?.last().expect("dim >= 1"),
            None => T::one(),
        };
        let l = c_norm * p_norm;
        if !(l > T::zero()) || !l.is_finite() {
            return Err(OuError::Numeric("degenerate curvature: empirical covariance is zero".into()));
        }
        Ok(l)
    }

    /// Max violation of the subgradient optimality conditions.
    fn kkt_residual(&self, a: &SquareMatrix<T>) -> T {
        let grad = self.gradient(a);
        let d = a.dim();
        let mut worst = T::zero();
        for i in 0..d {
            for j in 0..d {
                let bound = self.lambda * self.weight(i, j);
                let g = grad[(i, j)];
                let v = a[(i, j)];
                let viol =
                    if v == T::zero() { (g.abs() - bound).max(T::zero()) } else { (g + bound * v.signum()).abs() };
                worst = worst.max(viol);
            }
        }
        worst
    }

    /// Solves the stationarity equations with the support and signs of `a`
    /// frozen; returns the solution only when it satisfies every KKT
    /// condition of the full problem.
    fn refine_on_support(&self, a: &SquareMatrix<T>) -> Option<SquareMatrix<T>> {
        let d = a.dim();
        let c = &self.stats.c_hat;
        let g = &self.stats.g_hat;
        let mut out = SquareMatrix::zeros(d);
        match self.precision {
            None => {
                // Rows decouple: A_{i,S} C_{S,S} = -(G_{i,S} + lambda w sign).
                for i in 0..d {
                    let idx: Vec<usize> = (0..d).filter(|&j| a[(i, j)] != T::zero()).collect();
                    if idx.is_empty() {
                        continue;
                    }
                    let sub = c.principal_submatrix(&idx);
                    let rhs: Vec<T> = idx
                        .iter()
                        .map(|&j| -(g[(i, j)] + self.lambda * self.weight(i, j) * a[(i, j)].signum()))
                        .collect();
                    let sol = Lu::new(&sub).ok()?.solve_vec(&rhs);
                    for (&j, v) in idx.iter().zip(sol) {
                        out[(i, j)] = v;
                    }
                }
            }
            Some(p) => {
                let idx: Vec<(usize, usize)> =
                    (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).filter(|&(i, j)| a[(i, j)] != T::zero()).collect();
                if idx.is_empty() || idx.len() > MAX_COUPLED_REFINE {
                    return None;
                }
                // Row (i,j): sum_{(k,l) in S} P_ik C_lj A_kl = -(P G)_ij - lambda w sign
                let pg = p.matmul(g);
                let system = SquareMatrix::from_fn(idx.len(), |r, s| {
                    let (i, j) = idx[r];
                    let (k, l) = idx[s];
                    p[(i, k)] * c[(l, j)]
                });
                let rhs: Vec<T> = idx
                    .iter()
                    .map(|&(i, j)| -(pg[(i, j)] + self.lambda * self.weight(i, j) * a[(i, j)].signum()))
                    .collect();
                let sol = Lu::new(&system).ok()?.solve_vec(&rhs);
                for (&(i, j), v) in idx.iter().zip(sol) {
                    out[(i, j)] = v;
                }
            }
        }
        if !out.is_finite() {
            return None;
        }
        for i in 0..d {
            for j in 0..d {
                let before = a[(i, j)];
                let after = out[(i, j)];
                if before != T::zero() && (after == T::zero() || after.signum() != before.signum()) {
                    return None;
                }
            }
        }
        let grad = self.gradient(&out);
        let slack = T::of(1e-9);
        for i in 0..d {
            for j in 0..d {
                if out[(i, j)] == T::zero() {
                    let bound = self.lambda * self.weight(i, j);
                    if grad[(i, j)].abs() > bound * (T::one() + slack) + slack * T::epsilon().sqrt() {
                        return None;
                    }
                }
            }
        }
        Some(out)
    }
}

/// Inverse diffusion `(Sigma Sigma^T)^{-1}`.
pub fn diffusion_precision<T: Scalar>(sigma: &SquareMatrix<T>) -> Result<SquareMatrix<T>> {
    let lu = Lu::new(sigma).map_err(|_| OuError::InvalidArgument("sigma is singular".into()))?;
    let inv = lu.solve_mat(&SquareMatrix::identity(sigma.dim()));
    Ok(inv.transpose().matmul(&inv).symmetrize())
}

/// Fits `A` in `dR = -A (R - m) dt + Sigma dW` by penalised likelihood
/// with diffusion weighting.
pub fn fit_sigma_model<T: Scalar>(
    traj: &Trajectory<T>,
    mean: &[T],
    sigma: &SquareMatrix<T>,
    lambda: T,
    weights: Option<&SquareMatrix<T>>,
    opts: &SolverOptions<T>,
) -> Result<Estimate<T>> {
    if sigma.dim() != traj.dim() {
        return invalid("sigma dimension does not match the trajectory");
    }
    let precision = diffusion_precision(sigma)?;
    let stats = sufficient_stats_centered(traj, Some(mean))?;
    fit_penalized(&stats, Some(&precision), lambda, weights, opts, None)
}
