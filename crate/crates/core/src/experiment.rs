//! Monte Carlo sweeps producing one tidy row per replication, method and
//! sweep point.
//!
//! Replication `r` uses seed `replication_seed(seed, r)`; the truth is drawn
//! from one stream of that seed and the path from another, so the output
//! does not depend on how jobs are scheduled. Observation grids coarser than
//! the finest `dt` are obtained by subsampling one fine path.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, OuError, Result};
use crate::estimators::{diffusion_precision, lasso, mle, Estimate, SolverOptions};
use crate::eval::{dense_baseline_f1, oracle_bound, oracle_kappa, support_report, DEFAULT_ZERO_TOL};
use crate::finance::{estimate_mean_sigma, synthetic_market};
use crate::linops::SquareMatrix;
use crate::model::{generate_sparse_drift, generate_symmetric_sparse, DriftMatrix, SparsityPattern};
use crate::modelsel::{cross_validate_weighted, log_grid, split_stats, Method};
use crate::seed::{replication_seed, stream_seed};
use crate::sim::{sample_trajectory, subsample, Trajectory};
use crate::stats::{sufficient_stats, sufficient_stats_centered, theoretical_lambda, LambdaConfig};

/// Off-diagonal magnitude of the symmetric truths used for coverage runs.
pub const COVERAGE_STRENGTH: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    DSweep,
    TSweep,
    F1Study,
    DtStudy,
    OracleCoverage,
    Finance,
}

impl FromStr for ExperimentKind {
    type Err = OuError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.replace('-', "_").as_str() {
            "d_sweep" => Self::DSweep,
            "t_sweep" => Self::TSweep,
            "f1_study" => Self::F1Study,
            "dt_study" => Self::DtStudy,
            "oracle_coverage" => Self::OracleCoverage,
            "finance" => Self::Finance,
            other => return invalid(format!("unknown experiment kind '{other}'")),
        })
    }
}

/// Estimators compared in a sweep. `Lasso` and `AdaptiveLasso` choose the
/// penalty by hold-out validation; `LassoTheory` uses the theoretical level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    Mle,
    Lasso,
    AdaptiveLasso,
    LassoTheory,
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mle => "mle",
            Self::Lasso => "lasso",
            Self::AdaptiveLasso => "adaptive_lasso",
            Self::LassoTheory => "lasso_theory",
        })
    }
}

impl FromStr for BenchMethod {
    type Err = OuError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.replace('-', "_").as_str() {
            "mle" => Self::Mle,
            "lasso" => Self::Lasso,
            "adaptive_lasso" | "adalasso" => Self::AdaptiveLasso,
            "lasso_theory" => Self::LassoTheory,
            other => return invalid(format!("unknown method '{other}'")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { lo: 1e-2, hi: 1e3, points: 40 }
    }
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        log_grid(self.lo, self.hi, self.points)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub d_values: Vec<usize>,
    pub t_values: Vec<f64>,
    pub dt_values: Vec<f64>,
    /// Row sparsity as a fraction of `d` (at least one nonzero per row).
    pub s_rule: f64,
    pub reps: usize,
    pub seed: u64,
    /// Adaptive Lasso exponent.
    pub gamma: f64,
    pub grid: GridSpec,
    pub methods: Vec<BenchMethod>,
    /// Constant in the theoretical penalty.
    pub lambda_gamma: f64,
    pub epsilon0: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_kind(ExperimentKind::TSweep)
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for each kind.
    pub fn for_kind(kind: ExperimentKind) -> Self {
        use BenchMethod::*;
        let base = Self {
            kind,
            d_values: vec![10],
            t_values: vec![10.0, 100.0],
            dt_values: vec![0.01],
            s_rule: 0.2,
            reps: 20,
            seed: 0,
            gamma: 1.0,
            grid: GridSpec::default(),
            methods: vec![Mle, Lasso, AdaptiveLasso],
            lambda_gamma: 2.0,
            epsilon0: 0.1,
            rel_tol: 1e-8,
            max_iters: 10_000,
        };
        match kind {
            ExperimentKind::DSweep => Self { d_values: vec![5, 10, 20, 40], t_values: vec![100.0], ..base },
            ExperimentKind::TSweep => base,
            ExperimentKind::F1Study => Self { d_values: vec![10, 20, 40], t_values: vec![100.0], s_rule: 0.1, ..base },
            ExperimentKind::DtStudy => Self {
                t_values: vec![100.0],
                dt_values: vec![1.0, 0.1, 0.01, 0.001],
                methods: vec![Mle, Lasso],
                ..base
            },
            ExperimentKind::OracleCoverage => {
                Self { d_values: vec![5], t_values: vec![200.0], s_rule: 0.4, methods: vec![LassoTheory], ..base }
            }
            ExperimentKind::Finance => Self {
                d_values: vec![5],
                t_values: vec![500.0],
                s_rule: 0.4,
                methods: vec![Mle, AdaptiveLasso],
                ..base
            },
        }
    }

    /// Parses a flat JSON object; missing fields take the defaults of its
    /// `kind` (or of the t-sweep when no kind is given).
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let serde_json::Value::Object(fields) = value else {
            return invalid("experiment config must be a JSON object");
        };
        let kind = match fields.get("kind") {
            Some(k) => serde_json::from_value(k.clone())?,
            None => ExperimentKind::TSweep,
        };
        let serde_json::Value::Object(mut merged) = serde_json::to_value(Self::for_kind(kind))? else {
            unreachable!("config serializes to an object");
        };
        merged.extend(fields);
        Ok(serde_json::from_value(serde_json::Value::Object(merged))?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_values.is_empty() || self.t_values.is_empty() || self.dt_values.is_empty() {
            return invalid("sweep lists must be nonempty");
        }
        if self.methods.is_empty() {
            return invalid("at least one method is required");
        }
        if self.reps == 0 {
            return invalid("reps must be at least 1");
        }
        if self.d_values.contains(&0) {
            return invalid("dimensions must be positive");
        }
        if self.t_values.iter().chain(&self.dt_values).any(|&v| !(v > 0.0) || !v.is_finite()) {
            return invalid("horizons and time steps must be positive");
        }
        if !(self.s_rule > 0.0 && self.s_rule <= 1.0) {
            return invalid("s_rule must lie in (0, 1]");
        }
        if self.kind == ExperimentKind::Finance && self.methods.contains(&BenchMethod::LassoTheory) {
            return invalid("the theoretical penalty is not defined for the finance model");
        }
        self.grid.values()?;
        self.subsampling_factors()?;
        LambdaConfig::new(self.lambda_gamma, self.epsilon0, 0.0)?;
        Ok(())
    }

    pub fn sparsity(&self, d: usize) -> usize {
        ((self.s_rule * d as f64).round() as usize).clamp(1, d)
    }

    pub fn finest_dt(&self) -> f64 {
        self.dt_values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Factor of each `dt` relative to the finest one.
    pub fn subsampling_factors(&self) -> Result<Vec<usize>> {
        let fine = self.finest_dt();
        self.dt_values
            .iter()
            .map(|&dt| {
                let ratio = dt / fine;
                let k = ratio.round();
                if (ratio - k).abs() > 1e-6 * k {
                    invalid(format!("dt = {dt} is not a multiple of the finest step {fine}"))
                } else {
                    Ok(k as usize)
                }
            })
            .collect()
    }

    fn solver(&self) -> SolverOptions<f64> {
        SolverOptions { rel_tol: self.rel_tol, max_iters: self.max_iters, ..SolverOptions::accelerated() }
    }
}

/// One replication of one method at one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub method: String,
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub rep: usize,
    pub seed: u64,
    pub lambda: f64,
    pub frobenius: f64,
    pub l1: f64,
    pub f1: f64,
    pub wall_time: f64,
    /// Empirical-norm error and oracle bound (theoretical penalty only).
    pub empirical: Option<f64>,
    pub bound: Option<f64>,
    /// Errors of the estimated mean and relative error of `Sigma Sigma^T`
    /// (finance only).
    pub mean_error: Option<f64>,
    pub sigma_error: Option<f64>,
}

/// Column order of the benchmark CSV.
pub const CSV_COLUMNS: [&str; 15] = [
    "method",
    "d",
    "T",
    "dt",
    "rep",
    "seed",
    "lambda",
    "frobenius",
    "l1",
    "f1",
    "wall_time",
    "empirical",
    "bound",
    "mean_error",
    "sigma_error",
];

struct Job {
    d: usize,
    horizon: f64,
    t_index: usize,
    rep: usize,
}

pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<Vec<BenchmarkRow>> {
    cfg.validate()?;
    let jobs: Vec<Job> = cfg
        .d_values
        .iter()
        .flat_map(|&d| {
            cfg.t_values
                .iter()
                .enumerate()
                .flat_map(move |(t_index, &horizon)| (0..cfg.reps).map(move |rep| Job { d, horizon, t_index, rep }))
        })
        .collect();
    let per_job: Vec<Vec<BenchmarkRow>> = jobs.par_iter().map(|job| run_job(cfg, job)).collect::<Result<_>>()?;
    // regroup so rows are ordered by sweep point, then method, then replication
    let mut rows: Vec<BenchmarkRow> = per_job.into_iter().flatten().collect();
    let key = |r: &BenchmarkRow| {
        let di = cfg.d_values.iter().position(|&d| d == r.d).unwrap_or(0);
        let ti = cfg.t_values.iter().position(|&t| t == r.horizon).unwrap_or(0);
        let dti = cfg.dt_values.iter().position(|&t| t == r.dt).unwrap_or(0);
        let mi = cfg.methods.iter().position(|m| m.to_string() == r.method).unwrap_or(0);
        (di, ti, dti, mi, r.rep)
    };
    rows.sort_by_key(key);
    Ok(rows)
}

fn run_job(cfg: &ExperimentConfig, job: &Job) -> Result<Vec<BenchmarkRow>> {
    let rep_seed = replication_seed(cfg.seed, job.rep as u64);
    let s = cfg.sparsity(job.d);
    let path_seed = stream_seed(rep_seed, 1 + job.t_index as u64);
    let fine_dt = cfg.finest_dt();
    let factors = cfg.subsampling_factors()?;
    let mut rows = Vec::new();

    if cfg.kind == ExperimentKind::Finance {
        let market = synthetic_market(job.d, s, stream_seed(rep_seed, 0))?;
        let fine = market.sample(job.horizon, fine_dt, path_seed)?;
        for (&dt, &factor) in cfg.dt_values.iter().zip(&factors) {
            let traj = subsample(&fine, factor)?;
            let (m, sigma) = estimate_mean_sigma(&traj)?;
            let mean_error = m.iter().zip(&market.mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let true_qv = market.sigma.matmul_transpose(&market.sigma);
            let sigma_error = (&sigma.matmul_transpose(&sigma) - &true_qv).frobenius_norm() / true_qv.frobenius_norm();
            let precision = diffusion_precision(&sigma)?;
            for &method in &cfg.methods {
                let start = Instant::now();
                let est = match method {
                    BenchMethod::Mle => mle(&sufficient_stats_centered(&traj, Some(&m))?)?,
                    BenchMethod::Lasso | BenchMethod::AdaptiveLasso => {
                        cross_validate_weighted(
                            &traj,
                            cv_method(method),
                            cfg.gamma,
                            &cfg.grid.values()?,
                            &cfg.solver(),
                            Some(&m),
                            Some(&precision),
                        )?
                        .best_estimate
                    }
                    BenchMethod::LassoTheory => unreachable!("rejected by validate"),
                };
                let mut row = score(method, &est, market.drift.matrix(), job, dt, rep_seed, start)?;
                row.mean_error = Some(mean_error);
                row.sigma_error = Some(sigma_error);
                rows.push(row);
            }
        }
        return Ok(rows);
    }

    let truth: DriftMatrix<f64> = if cfg.kind == ExperimentKind::OracleCoverage {
        generate_symmetric_sparse(job.d, s, COVERAGE_STRENGTH, stream_seed(cfg.seed, 0))?
    } else {
        generate_sparse_drift(job.d, s, stream_seed(rep_seed, 0))?
    };
    let fine = sample_trajectory(&truth, job.horizon, fine_dt, path_seed, None)?;
    for (&dt, &factor) in cfg.dt_values.iter().zip(&factors) {
        let traj = subsample(&fine, factor)?;
        for &method in &cfg.methods {
            rows.push(fit_and_score(cfg, method, &traj, &truth, job, dt, rep_seed)?);
        }
    }
    Ok(rows)
}

fn cv_method(method: BenchMethod) -> Method {
    match method {
        BenchMethod::AdaptiveLasso => Method::AdaptiveLasso,
        _ => Method::Lasso,
    }
}

fn fit_and_score(
    cfg: &ExperimentConfig,
    method: BenchMethod,
    traj: &Trajectory<f64>,
    truth: &DriftMatrix<f64>,
    job: &Job,
    dt: f64,
    rep_seed: u64,
) -> Result<BenchmarkRow> {
    let start = Instant::now();
    let stats = sufficient_stats(traj)?;
    let mut extra = None;
    let est = match method {
        BenchMethod::Mle => mle(&stats)?,
        BenchMethod::Lasso | BenchMethod::AdaptiveLasso => {
            let (train, valid) = split_stats(traj, None)?;
            crate::modelsel::cross_validate_stats(
                &train,
                &valid,
                cv_method(method),
                cfg.gamma,
                &cfg.grid.values()?,
                &cfg.solver(),
                None,
            )?
            .best_estimate
        }
        BenchMethod::LassoTheory => {
            let lcfg = LambdaConfig::new(cfg.lambda_gamma, cfg.epsilon0, 0.0)?;
            let lambda = theoretical_lambda(&stats, &lcfg)?;
            let est = lasso(&stats, lambda, None, &cfg.solver())?;
            let delta = &est.matrix - truth.matrix();
            let empirical = delta.matmul(&stats.c_hat).inner(&delta).max(0.0).sqrt();
            let s = SparsityPattern::of_matrix(truth.matrix(), 0.0).row_sparsity;
            let kappa = oracle_kappa(truth.stationary_cov())?;
            extra = Some((empirical, oracle_bound(lcfg.gamma, kappa, lambda, job.d, s)));
            est
        }
    };
    let mut row = score(method, &est, truth.matrix(), job, dt, rep_seed, start)?;
    if let Some((e, b)) = extra {
        row.empirical = Some(e);
        row.bound = Some(b);
    }
    Ok(row)
}

fn score(
    method: BenchMethod,
    est: &Estimate<f64>,
    truth: &SquareMatrix<f64>,
    job: &Job,
    dt: f64,
    rep_seed: u64,
    start: Instant,
) -> Result<BenchmarkRow> {
    let wall_time = start.elapsed().as_secs_f64();
    let delta = &est.matrix - truth;
    Ok(BenchmarkRow {
        method: method.to_string(),
        d: job.d,
        horizon: job.horizon,
        dt,
        rep: job.rep,
        seed: rep_seed,
        lambda: est.lambda,
        frobenius: delta.frobenius_norm(),
        l1: delta.l1_norm(),
        f1: support_report(&est.matrix, truth, DEFAULT_ZERO_TOL)?.f1,
        wall_time,
        empirical: None,
        bound: None,
        mean_error: None,
        sigma_error: None,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub reps: usize,
    pub frobenius: MeanStd,
    pub l1: MeanStd,
    pub f1: MeanStd,
    pub wall_time: MeanStd,
    /// F1 of an all-dense estimate at this sparsity.
    pub dense_f1: f64,
    /// Fraction of replications inside the oracle bound, when computed.
    pub coverage: Option<f64>,
}

/// Groups rows by `(method, d, T, dt)` in order of first appearance.
pub fn summarize(cfg: &ExperimentConfig, rows: &[BenchmarkRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, usize, f64, f64)> = Vec::new();
    for r in rows {
        let k = (r.method.clone(), r.d, r.horizon, r.dt);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(method, d, horizon, dt)| {
            let group: Vec<&BenchmarkRow> =
                rows.iter().filter(|r| r.method == method && r.d == d && r.horizon == horizon && r.dt == dt).collect();
            let col = |f: fn(&BenchmarkRow) -> f64| MeanStd::of(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            let bounded: Vec<bool> = group.iter().filter_map(|r| Some(r.empirical? <= r.bound?)).collect();
            let coverage = if bounded.is_empty() {
                None
            } else {
                Some(bounded.iter().filter(|&&b| b).count() as f64 / bounded.len() as f64)
            };
            SummaryRow {
                reps: group.len(),
                frobenius: col(|r| r.frobenius),
                l1: col(|r| r.l1),
                f1: col(|r| r.f1),
                wall_time: col(|r| r.wall_time),
                dense_f1: dense_baseline_f1(cfg.sparsity(d), d),
                coverage,
                method,
                d,
                horizon,
                dt,
            }
        })
        .collect()
}

/// Writes rows as CSV with the columns of [`CSV_COLUMNS`].
pub fn write_rows_csv<W: std::io::Write>(rows: &[BenchmarkRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wtr.write_record(CSV_COLUMNS)?;
    }
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
