use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use serde::Serialize;
use sparse_ou::eval::{
    deviation_bounds as dev_bounds, oracle_coverage as coverage, oracle_kappa, re_constant as re_probe,
    DEFAULT_ZERO_TOL,
};
use sparse_ou::experiment::{run_benchmark, summarize, write_rows_csv, BenchMethod, CSV_COLUMNS};
use sparse_ou::finance::{fit_finance, load_prices, EmaConfig};
use sparse_ou::model::{
    generate_shifted_antisymmetric, generate_sparse_drift, generate_symmetric_sparse, generate_two_group,
};
use sparse_ou::modelsel::log_grid;
use sparse_ou::seed::stream_seed;
use sparse_ou::sim::sample_trajectory;
use sparse_ou::stats::{sufficient_stats, theoretical_lambda};
use sparse_ou::{
    adaptive_lasso, cross_validate, error_report, lasso, mle, support_report, Drift, ExperimentConfig, ExperimentKind,
    LambdaConfig, Method, Options, OuError, Path as Traj,
};

use crate::{
    BenchmarkArgs, CoverageArgs, CvArgs, CvMethod, DeviationArgs, DriftKind, FinanceArgs, FitArgs, FitMethod, GridArgs,
    LambdaChoice, ReConstantArgs, SimulateArgs, SolverArgs, UsageError,
};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Argument-validation failures from the library become usage errors.
fn as_usage(e: OuError) -> anyhow::Error {
    match e {
        OuError::InvalidArgument(msg) => usage(msg),
        other => other.into(),
    }
}

/// `dir/<stem><suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn write_json<S: Serialize>(path: Option<&Path>, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn read_trajectory(path: &Path) -> Result<Traj> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Traj::read_csv(BufReader::new(f)).with_context(|| format!("cannot read trajectory {}", path.display()))
}

fn read_drift(path: &Path) -> Result<Drift> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Drift::read_csv(BufReader::new(f)).with_context(|| format!("cannot read drift {}", path.display()))
}

fn options(a: &SolverArgs) -> Options {
    Options { max_iters: a.max_iters, rel_tol: a.rel_tol, acceleration: a.accelerate, ..Options::default() }
}

fn grid(a: &GridArgs) -> Result<Vec<f64>> {
    log_grid(a.grid_lo, a.grid_hi, a.grid_points).map_err(as_usage)
}

fn cv_method(m: CvMethod) -> Method {
    match m {
        CvMethod::Lasso => Method::Lasso,
        CvMethod::Adalasso => Method::AdaptiveLasso,
    }
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let seed = a.seed.seed;
    let drift = match a.kind {
        DriftKind::Sparse => {
            if a.s == 0 || a.s > a.d {
                return Err(usage(format!("--s must lie in 1..={} for the sparse kind", a.d)));
            }
            generate_sparse_drift(a.d, a.s, stream_seed(seed, 0))?
        }
        DriftKind::TwoGroup => {
            if !a.d.is_multiple_of(2) {
                return Err(usage(format!("the two-group kind needs an even --d (got {})", a.d)));
            }
            generate_two_group(a.d)?
        }
        DriftKind::Antisymmetric => {
            if a.s >= a.d {
                return Err(usage(format!("--s must be below --d for the antisymmetric kind (got {})", a.s)));
            }
            generate_shifted_antisymmetric(a.d, a.alpha, a.w, a.s, stream_seed(seed, 0)).map_err(as_usage)?
        }
    };
    if a.dt > a.horizon {
        return Err(usage("--dt must not exceed --T"));
    }
    let traj = sample_trajectory(&drift, a.horizon, a.dt, stream_seed(seed, 1), None)?;
    let mut w = create(&a.out)?;
    traj.write_csv(&mut w)?;
    w.flush()?;
    let drift_path = a.drift_out.clone().unwrap_or_else(|| sibling(&a.out, "_drift.csv"));
    let mut w = create(&drift_path)?;
    drift.write_csv(&mut w)?;
    w.flush()?;
    info!("wrote {} states to {} and the drift to {}", traj.len(), a.out.display(), drift_path.display());
    Ok(())
}

#[derive(Serialize)]
struct Report {
    errors: sparse_ou::ErrorReport<f64>,
    support: sparse_ou::SupportReport,
}

#[derive(Serialize)]
struct FitOutput<'a> {
    args: &'a FitArgs,
    estimate: &'a sparse_ou::Fit,
    report: Option<Report>,
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let opts = options(&a.solver);
    let traj = read_trajectory(&a.input)?;
    let truth = a.truth.as_deref().map(read_drift).transpose()?;
    if let Some(t) = &truth {
        if t.dim() != traj.dim() {
            return Err(usage(format!("truth has dimension {} but the trajectory has {}", t.dim(), traj.dim())));
        }
    }
    let stats = sufficient_stats(&traj)?;
    let estimate = match (a.method, a.lambda) {
        (FitMethod::Mle, _) => mle(&stats)?,
        (method, LambdaChoice::Cv) => {
            let cv_path = match (&a.cv_out, &a.out) {
                (Some(p), _) => p.clone(),
                (None, Some(out)) => sibling(out, "_cv.json"),
                (None, None) => return Err(usage("--lambda cv needs --out or --cv-out")),
            };
            let m = if method == FitMethod::Lasso { Method::Lasso } else { Method::AdaptiveLasso };
            let result = cross_validate(&traj, m, a.gamma, &grid(&a.grid)?, &opts)?;
            write_json(Some(&cv_path), &result)?;
            info!("cross-validation chose lambda = {}", result.best_lambda);
            result.best_estimate
        }
        (method, choice) => {
            let lambda = match choice {
                LambdaChoice::Fixed(v) => v,
                _ => {
                    let cfg = LambdaConfig::new(a.lambda_gamma, a.epsilon0, 0.0).map_err(as_usage)?;
                    theoretical_lambda(&stats, &cfg)?
                }
            };
            if method == FitMethod::Lasso {
                lasso(&stats, lambda, None, &opts)?
            } else {
                adaptive_lasso(&stats, lambda, a.gamma, &opts)?
            }
        }
    };
    let report = match &truth {
        Some(t) => Some(Report {
            errors: error_report(&estimate.matrix, t, &stats, &[1.0, 1.5, 2.0])?,
            support: support_report(&estimate.matrix, t.matrix(), DEFAULT_ZERO_TOL)?,
        }),
        None => None,
    };
    write_json(a.out.as_deref(), &FitOutput { args: a, estimate: &estimate, report })
}

#[derive(Serialize)]
struct CvOutput<'a> {
    args: &'a CvArgs,
    #[serde(flatten)]
    result: sparse_ou::CvResult<f64>,
}

pub fn cv(a: &CvArgs) -> Result<()> {
    let traj = read_trajectory(&a.input)?;
    let result = cross_validate(&traj, cv_method(a.method), a.gamma, &grid(&a.grid)?, &options(&a.solver))?;
    write_json(a.out.as_deref(), &CvOutput { args: a, result })
}

fn build_config(a: &BenchmarkArgs) -> Result<ExperimentConfig> {
    let kind = a.kind.as_deref().map(|k| k.parse::<ExperimentKind>()).transpose().map_err(as_usage)?;
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let mut cfg =
                ExperimentConfig::from_json(&text).map_err(|e| usage(format!("bad config {}: {e}", path.display())))?;
            if let Some(k) = kind {
                cfg.kind = k;
            }
            cfg
        }
        None => ExperimentConfig::for_kind(kind.unwrap_or(ExperimentKind::TSweep)),
    };
    if let Some(v) = &a.d_values {
        cfg.d_values = v.clone();
    }
    if let Some(v) = &a.t_values {
        cfg.t_values = v.clone();
    }
    if let Some(v) = &a.dt_values {
        cfg.dt_values = v.clone();
    }
    if let Some(v) = a.s_rule {
        cfg.s_rule = v;
    }
    if let Some(v) = a.reps {
        cfg.reps = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.gamma {
        cfg.gamma = v;
    }
    if let Some(m) = &a.methods {
        cfg.methods = m
            .split(',')
            .map(|s| s.trim().parse::<BenchMethod>())
            .collect::<sparse_ou::Result<_>>()
            .map_err(as_usage)?;
    }
    if let Some(v) = a.grid_lo {
        cfg.grid.lo = v;
    }
    if let Some(v) = a.grid_hi {
        cfg.grid.hi = v;
    }
    if let Some(v) = a.grid_points {
        cfg.grid.points = v;
    }
    cfg.validate().map_err(as_usage)?;
    Ok(cfg)
}

#[derive(Serialize)]
struct BenchmarkSummary<'a> {
    config: &'a ExperimentConfig,
    csv: String,
    columns: &'a [&'a str],
    rows: usize,
    summary: Vec<sparse_ou::experiment::SummaryRow>,
}

pub fn benchmark(a: &BenchmarkArgs) -> Result<()> {
    let cfg = build_config(a)?;
    if let Some(jobs) = a.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().context("cannot size the worker pool")?;
    }
    info!("running {:?} with {} worker threads", cfg.kind, rayon::current_num_threads());
    let rows = run_benchmark(&cfg)?;
    let mut w = create(&a.out)?;
    write_rows_csv(&rows, &mut w)?;
    w.flush()?;
    let summary_path = a.summary.clone().unwrap_or_else(|| sibling(&a.out, "_summary.json"));
    let summary = BenchmarkSummary {
        config: &cfg,
        csv: a.out.display().to_string(),
        columns: &CSV_COLUMNS,
        rows: rows.len(),
        summary: summarize(&cfg, &rows),
    };
    write_json(Some(&summary_path), &summary)
}

#[derive(Serialize)]
struct FinanceOutput<'a> {
    args: &'a FinanceArgs,
    dates: usize,
    dropped_rows: usize,
    #[serde(flatten)]
    model: sparse_ou::finance::FinanceModel,
}

pub fn finance(a: &FinanceArgs) -> Result<()> {
    let panel = load_prices(&a.prices).with_context(|| format!("cannot load prices from {}", a.prices.display()))?;
    let ema = EmaConfig::new(a.span).map_err(as_usage)?;
    let (model, cv) = fit_finance(&panel, &ema, cv_method(a.method), a.gamma, &grid(&a.grid)?, &options(&a.solver))?;
    if let Some(p) = &a.cv_out {
        write_json(Some(p), &cv)?;
    }
    let out = FinanceOutput { args: a, dates: panel.dates.len(), dropped_rows: panel.dropped_rows, model };
    write_json(a.out.as_deref(), &out)
}

#[derive(Serialize)]
struct ReOutput<'a> {
    args: &'a ReConstantArgs,
    #[serde(flatten)]
    re: sparse_ou::eval::ReConstant<f64>,
    kappa: Option<f64>,
}

pub fn re_constant(a: &ReConstantArgs) -> Result<()> {
    let traj = read_trajectory(&a.input)?;
    if a.s > traj.dim() {
        return Err(usage(format!("--s must not exceed the dimension {}", traj.dim())));
    }
    let kappa = match &a.truth {
        Some(p) => Some(oracle_kappa(read_drift(p)?.stationary_cov())?),
        None => None,
    };
    let stats = sufficient_stats(&traj)?;
    let re = re_probe(&stats, a.s, a.c0, a.probes, a.seed.seed).map_err(as_usage)?;
    write_json(a.out.as_deref(), &ReOutput { args: a, re, kappa })
}

/// Infinite values serialize as `null`.
#[derive(Serialize)]
struct DeviationOutput<'a> {
    args: &'a DeviationArgs,
    u: Vec<f64>,
    h1: f64,
    h2: f64,
}

pub fn deviation_bounds(a: &DeviationArgs) -> Result<()> {
    let drift = read_drift(&a.drift)?;
    let d = drift.dim();
    let u = a.u.clone().unwrap_or_else(|| (0..d).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect());
    let (h1, h2) = dev_bounds(a.r, &u, drift.stationary_cov()).map_err(as_usage)?;
    write_json(a.out.as_deref(), &DeviationOutput { args: a, u, h1, h2 })
}

#[derive(Serialize)]
struct CoverageOutput<'a> {
    args: &'a CoverageArgs,
    truth: &'a sparse_ou::Matrix,
    #[serde(flatten)]
    coverage: sparse_ou::eval::Coverage<f64>,
}

pub fn oracle_coverage(a: &CoverageArgs) -> Result<()> {
    let seed = a.seed.seed;
    let (truth, s) = match &a.drift {
        Some(p) => {
            let t = read_drift(p)?;
            let s = t.support().row_counts().into_iter().max().unwrap_or(1).max(1);
            (t, s)
        }
        None => (generate_symmetric_sparse(a.d, a.s, a.strength, stream_seed(seed, 0)).map_err(as_usage)?, a.s),
    };
    let cfg = LambdaConfig::new(a.lambda_gamma, a.epsilon0, 0.0).map_err(as_usage)?;
    let cov = coverage(&truth, s, a.horizon, a.dt, a.reps, &cfg, &options(&a.solver), stream_seed(seed, 1))?;
    write_json(a.out.as_deref(), &CoverageOutput { args: a, truth: truth.matrix(), coverage: cov })
}
