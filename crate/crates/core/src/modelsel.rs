//! Hold-out selection of the penalty level.
//!
//! The trajectory is cut at step `floor(0.8 n)`; the state at the cut ends
//! the training integrals and starts the validation increments. Each grid
//! point is fitted on the training statistics, warm-started from the next
//! larger grid value, and scored by the likelihood of the validation
//! segment.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, OuError, Result};
use crate::estimators::{adaptive_weights, fit_penalized, mle, Estimate, SolverOptions};
use crate::linops::SquareMatrix;
use crate::scalar::Scalar;
use crate::sim::Trajectory;
use crate::stats::{neg_log_likelihood, sufficient_stats_centered, weighted_neg_log_likelihood, SufficientStats};

/// Fraction of the horizon used for training.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lasso,
    AdaptiveLasso,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Lasso => "lasso",
            Method::AdaptiveLasso => "adaptive_lasso",
        })
    }
}

impl FromStr for Method {
    type Err = OuError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lasso" => Ok(Method::Lasso),
            "adaptive_lasso" | "adalasso" | "adaptive-lasso" => Ok(Method::AdaptiveLasso),
            other => invalid(format!("unknown method '{other}'")),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CvResult<T> {
    pub lambda_grid: Vec<T>,
    pub validation_scores: Vec<T>,
    pub best_lambda: T,
    pub best_estimate: Estimate<T>,
}

impl<T: Scalar> CvResult<T> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid<T: Scalar>(lo: T, hi: T, n: usize) -> Result<Vec<T>> {
    if !(lo > T::zero()) || !(hi >= lo) || n == 0 {
        return invalid("log grid needs 0 < lo <= hi and n >= 1");
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let last = T::of_usize(n - 1);
    Ok((0..n).map(|k| (a + (b - a) * T::of_usize(k) / last).exp()).collect())
}

/// 40 log-spaced points over `[1e-2, 1e3]`.
pub fn default_grid<T: Scalar>() -> Vec<T> {
    log_grid(T::of(1e-2), T::of(1e3), 40).expect("valid default grid")
}

/// Step index at which training ends and validation starts.
pub fn split_index(steps: usize) -> usize {
    (TRAIN_FRACTION * steps as f64).floor() as usize
}

/// Training and validation segments sharing the boundary state.
pub fn split_trajectory<T: Scalar>(traj: &Trajectory<T>) -> Result<(Trajectory<T>, Trajectory<T>)> {
    let steps = traj.steps();
    let k = split_index(steps);
    if k < 1 || k >= steps {
        return invalid(format!("trajectory with {steps} steps is too short to split for validation"));
    }
    Ok((traj.segment(0, k)?, traj.segment(k, steps)?))
}

/// Training and validation statistics, optionally centred on `mean`.
pub fn split_stats<T: Scalar>(
    traj: &Trajectory<T>,
    mean: Option<&[T]>,
) -> Result<(SufficientStats<T>, SufficientStats<T>)> {
    let (train, valid) = split_trajectory(traj)?;
    Ok((sufficient_stats_centered(&train, mean)?, sufficient_stats_centered(&valid, mean)?))
}

pub fn cross_validate<T: Scalar>(
    traj: &Trajectory<T>,
    method: Method,
    gamma: T,
    grid: &[T],
    opts: &SolverOptions<T>,
) -> Result<CvResult<T>> {
    cross_validate_weighted(traj, method, gamma, grid, opts, None, None)
}

/// Cross-validation for the model with mean `mean` and diffusion precision
/// `precision`; both `None` gives [`cross_validate`].
pub fn cross_validate_weighted<T: Scalar>(
    traj: &Trajectory<T>,
    method: Method,
    gamma: T,
    grid: &[T],
    opts: &SolverOptions<T>,
    mean: Option<&[T]>,
    precision: Option<&SquareMatrix<T>>,
) -> Result<CvResult<T>> {
    let (train, valid) = split_stats(traj, mean)?;
    cross_validate_stats(&train, &valid, method, gamma, grid, opts, precision)
}

/// Selection from precomputed training and validation statistics.
pub fn cross_validate_stats<T: Scalar>(
    train: &SufficientStats<T>,
    valid: &SufficientStats<T>,
    method: Method,
    gamma: T,
    grid: &[T],
    opts: &SolverOptions<T>,
    precision: Option<&SquareMatrix<T>>,
) -> Result<CvResult<T>> {
    if grid.is_empty() {
        return invalid("lambda grid is empty");
    }
    if grid.iter().any(|&l| !(l >= T::zero()) || !l.is_finite()) {
        return invalid("lambda grid values must be finite and non-negative");
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));

    let (weights, mut warm) = match method {
        Method::Lasso => (None, None),
        Method::AdaptiveLasso => {
            let start = mle(train)?.matrix;
            (Some(adaptive_weights(&start, gamma)?), Some(start))
        }
    };
    let score = |a: &SquareMatrix<T>| match precision {
        Some(p) => weighted_neg_log_likelihood(a, valid, p),
        None => neg_log_likelihood(a, valid),
    };

    let mut fits: Vec<Option<Estimate<T>>> = vec![None; sorted.len()];
    let mut scores = vec![T::zero(); sorted.len()];
    for idx in (0..sorted.len()).rev() {
        let mut est = fit_penalized(train, precision, sorted[idx], weights.as_ref(), opts, warm.as_ref())?;
        if method == Method::AdaptiveLasso {
            est.gamma = Some(gamma);
        }
        scores[idx] = score(&est.matrix)?;
        warm = Some(est.matrix.clone());
        fits[idx] = Some(est);
    }

    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = k;
        }
    }
    if !scores[best].is_finite() {
        return Err(OuError::Numeric("validation scores are not finite".into()));
    }
    Ok(CvResult {
        best_lambda: sorted[best],
        best_estimate: fits[best].take().expect("every grid point fitted"),
        lambda_grid: sorted,
        validation_scores: scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_sparse_drift;
    use crate::sim::sample_trajectory;
    use crate::stats::sufficient_stats;
    use approx::assert_relative_eq;

    fn path(seed: u64) -> Trajectory<f64> {
        let drift = generate_sparse_drift::<f64>(5, 2, seed).unwrap();
        sample_trajectory(&drift, 20.0, 0.01, seed + 1, None).unwrap()
    }

    #[test]
    fn default_grid_shape() {
        let g: Vec<f64> = default_grid();
        assert_eq!(g.len(), 40);
        assert_relative_eq!(g[0], 1e-2, max_relative = 1e-12);
        assert_relative_eq!(g[39], 1e3, max_relative = 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let ratio = g[1] / g[0];
        assert!(g.windows(2).all(|w| (w[1] / w[0] - ratio).abs() < 1e-9));
    }

    #[test]
    fn split_shares_boundary_state() {
        let traj = path(1);
        let (train, valid) = split_trajectory(&traj).unwrap();
        assert_eq!(train.steps(), 1600);
        assert_eq!(valid.steps(), 400);
        assert_eq!(train.state(1600), valid.state(0));
        let (s_train, _) = split_stats(&traj, None).unwrap();
        let truncated = Trajectory::new(5, 0.01, traj.as_flat()[..1601 * 5].to_vec()).unwrap();
        assert_eq!(sufficient_stats(&truncated).unwrap(), s_train);
    }

    #[test]
    fn too_short_to_split() {
        let traj = Trajectory::from_states(0.1, &[vec![1.0], vec![0.5]]).unwrap();
        assert!(cross_validate(&traj, Method::Lasso, 1.0, &[0.1], &SolverOptions::default()).is_err());
    }

    #[test]
    fn single_point_grid() {
        let cv = cross_validate(&path(2), Method::Lasso, 1.0, &[0.3], &SolverOptions::default()).unwrap();
        assert_eq!(cv.best_lambda, 0.3);
        assert_eq!(cv.lambda_grid.len(), cv.validation_scores.len());
    }

    #[test]
    fn endpoint_semantics() {
        let traj = path(3);
        let (train, valid) = split_stats(&traj, None).unwrap();
        let cv = cross_validate(&traj, Method::Lasso, 1.0, &[1e6, 0.0], &SolverOptions::default()).unwrap();
        assert_eq!(cv.lambda_grid, vec![0.0, 1e6]);
        let at_mle = neg_log_likelihood(&mle(&train).unwrap().matrix, &valid).unwrap();
        assert_relative_eq!(cv.validation_scores[0], at_mle, max_relative = 1e-6);
        assert_eq!(cv.validation_scores[1], 0.0);
        let expected = if at_mle < 0.0 { 0.0 } else { 1e6 };
        assert_eq!(cv.best_lambda, expected);
    }

    #[test]
    fn ties_pick_smallest_lambda() {
        let traj = path(4);
        let cv = cross_validate(&traj, Method::Lasso, 1.0, &[1e5, 1e4, 1e6], &SolverOptions::default()).unwrap();
        assert!(cv.validation_scores.iter().all(|&s| s == 0.0));
        assert_eq!(cv.best_lambda, 1e4);
    }

    #[test]
    fn best_attains_minimum_and_is_deterministic() {
        let traj = path(5);
        let grid = log_grid(1e-3, 10.0, 12).unwrap();
        let a = cross_validate(&traj, Method::AdaptiveLasso, 1.0, &grid, &SolverOptions::default()).unwrap();
        let b = cross_validate(&traj, Method::AdaptiveLasso, 1.0, &grid, &SolverOptions::default()).unwrap();
        let min = a.validation_scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let idx = a.lambda_grid.iter().position(|&l| l == a.best_lambda).unwrap();
        assert_eq!(a.validation_scores[idx], min);
        assert!(a.validation_scores.iter().all(|s| s.is_finite()));
        assert_eq!(a.validation_scores, b.validation_scores);
        assert_eq!(a.best_estimate.matrix, b.best_estimate.matrix);
        assert_eq!(a.best_estimate.gamma, Some(1.0));
    }

    #[test]
    fn rejects_bad_grids() {
        let traj = path(6);
        let opts = SolverOptions::default();
        assert!(cross_validate(&traj, Method::Lasso, 1.0, &[], &opts).is_err());
        assert!(cross_validate(&traj, Method::Lasso, 1.0, &[-1.0], &opts).is_err());
    }

    #[test]
    fn method_names() {
        assert_eq!("adalasso".parse::<Method>().unwrap(), Method::AdaptiveLasso);
        assert_eq!(Method::Lasso.to_string().parse::<Method>().unwrap(), Method::Lasso);
        assert!("ridge".parse::<Method>().is_err());
    }
}
