mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Simulate Ornstein-Uhlenbeck paths and estimate sparse drift matrices.
///
/// Exit status is 0 on success, 2 for invalid arguments and 1 for runtime
/// failures. Seeds fall back to SPARSE_OU_SEED, then to 0.
#[derive(Debug, Parser)]
#[command(name = "sparse-ou", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a drift matrix and sample a trajectory from it.
    Simulate(SimulateArgs),
    /// Fit a drift matrix to a trajectory CSV.
    Fit(FitArgs),
    /// Hold-out cross-validation over a log-spaced penalty grid.
    Cv(CvArgs),
    /// Run a replicated sweep and write tidy CSV plus a summary JSON.
    Benchmark(BenchmarkArgs),
    /// Fit the mean-reverting returns model to a price panel.
    Finance(FinanceArgs),
    /// Theoretical quantities: restricted eigenvalues, deviation bounds, oracle coverage.
    #[command(subcommand)]
    Diagnostics(Diagnostic),
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum DriftKind {
    Sparse,
    TwoGroup,
    Antisymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
enum FitMethod {
    Mle,
    Lasso,
    #[value(alias = "adaptive-lasso")]
    Adalasso,
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
enum CvMethod {
    Lasso,
    #[value(alias = "adaptive-lasso")]
    Adalasso,
}

/// `--lambda` value: a number, `theory` or `cv`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
enum LambdaChoice {
    Fixed(f64),
    Theory,
    Cv,
}

fn parse_lambda(s: &str) -> Result<LambdaChoice, String> {
    match s {
        "theory" => Ok(LambdaChoice::Theory),
        "cv" => Ok(LambdaChoice::Cv),
        _ => match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(LambdaChoice::Fixed(v)),
            _ => Err(format!("expected a non-negative number, `theory` or `cv`, got {s:?}")),
        },
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn dimension(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("expected a positive integer, got {s:?}")),
    }
}

#[derive(Debug, Args, serde::Serialize)]
struct SeedArg {
    /// Random seed.
    #[arg(long, env = "SPARSE_OU_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, serde::Serialize)]
struct SolverArgs {
    /// Relative objective change at which the solver stops.
    #[arg(long, default_value_t = 1e-8, value_parser = positive)]
    rel_tol: f64,
    #[arg(long, default_value_t = 10_000, value_parser = dimension)]
    max_iters: usize,
    /// Use FISTA momentum instead of plain proximal gradient.
    #[arg(long)]
    accelerate: bool,
}

#[derive(Debug, Args, serde::Serialize)]
struct GridArgs {
    #[arg(long, default_value_t = 1e-2, value_parser = positive)]
    grid_lo: f64,
    #[arg(long, default_value_t = 1e3, value_parser = positive)]
    grid_hi: f64,
    #[arg(long, default_value_t = 40, value_parser = dimension)]
    grid_points: usize,
}

#[derive(Debug, Args, serde::Serialize)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "sparse")]
    kind: DriftKind,
    /// Dimension.
    #[arg(long, value_parser = dimension)]
    d: usize,
    /// Nonzeros per row (sparse and antisymmetric kinds).
    #[arg(long, default_value_t = 2)]
    s: usize,
    /// Horizon.
    #[arg(long = "T", value_parser = positive)]
    horizon: f64,
    #[arg(long, default_value_t = 0.01, value_parser = positive)]
    dt: f64,
    /// Diagonal shift of the antisymmetric kind.
    #[arg(long, default_value_t = 0.5, value_parser = positive)]
    alpha: f64,
    /// Coupling weight of the antisymmetric kind.
    #[arg(long, default_value_t = 1.0)]
    w: f64,
    #[command(flatten)]
    seed: SeedArg,
    /// Trajectory CSV (`t,x0,...`).
    #[arg(long)]
    out: PathBuf,
    /// Drift CSV; defaults to `<out stem>_drift.csv` next to the trajectory.
    #[arg(long)]
    drift_out: Option<PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
struct FitArgs {
    /// Trajectory CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "lasso")]
    method: FitMethod,
    /// Penalty: a number, `theory` or `cv`.
    #[arg(long, default_value = "cv", value_parser = parse_lambda)]
    lambda: LambdaChoice,
    /// Adaptive Lasso exponent.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    gamma: f64,
    /// Constant of the theoretical penalty (must exceed 1).
    #[arg(long, default_value_t = 2.0)]
    lambda_gamma: f64,
    /// Failure probability of the theoretical penalty.
    #[arg(long, default_value_t = 0.1)]
    epsilon0: f64,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Drift CSV of the true matrix; adds error and support reports.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Estimate JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where `--lambda cv` writes its CvResult; defaults to `<out stem>_cv.json`.
    #[arg(long)]
    cv_out: Option<PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
struct CvArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "lasso")]
    method: CvMethod,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    gamma: f64,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// CvResult JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Flat JSON experiment config; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// d-sweep, t-sweep, f1-study, dt-study, oracle-coverage or finance.
    #[arg(long)]
    kind: Option<String>,
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',')]
    d_values: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    t_values: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    dt_values: Option<Vec<f64>>,
    /// Row sparsity as a fraction of d.
    #[arg(long)]
    s_rule: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, env = "SPARSE_OU_SEED")]
    seed: Option<u64>,
    /// Adaptive Lasso exponent.
    #[arg(long)]
    gamma: Option<f64>,
    /// Comma-separated subset of mle, lasso, adaptive_lasso, lasso_theory.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    grid_lo: Option<f64>,
    #[arg(long)]
    grid_hi: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, value_parser = dimension)]
    jobs: Option<usize>,
    /// Tidy CSV, one row per replication, method and sweep point.
    #[arg(long)]
    out: PathBuf,
    /// Summary JSON; defaults to `<out stem>_summary.json`.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
struct FinanceArgs {
    /// Price CSV: a date column (YYYY-MM-DD) followed by one column per ticker.
    #[arg(long)]
    prices: PathBuf,
    /// EMA span in rows.
    #[arg(long, default_value_t = 10, value_parser = dimension)]
    span: usize,
    #[arg(long, value_enum, default_value = "adalasso")]
    method: CvMethod,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    gamma: f64,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Model JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the CvResult here.
    #[arg(long)]
    cv_out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Diagnostic {
    /// Probe the restricted eigenvalue of the empirical covariance.
    ReConstant(ReConstantArgs),
    /// Exponential-rate constants of the deviation inequality for one direction.
    DeviationBounds(DeviationArgs),
    /// Fraction of runs in which the theoretical-penalty Lasso meets the oracle bound.
    OracleCoverage(CoverageArgs),
}

#[derive(Debug, Args, serde::Serialize)]
struct ReConstantArgs {
    /// Trajectory CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = dimension)]
    s: usize,
    /// Cone constant.
    #[arg(long, default_value_t = 3.0, value_parser = positive)]
    c0: f64,
    #[arg(long, default_value_t = 2000, value_parser = dimension)]
    probes: usize,
    /// Drift CSV; adds the stationary kappa for comparison.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
struct DeviationArgs {
    /// Drift CSV whose stationary covariance is used.
    #[arg(long)]
    drift: PathBuf,
    /// Deviation radius R.
    #[arg(long, value_parser = positive)]
    r: f64,
    /// Comma-separated direction with Euclidean norm at most 1; first basis vector by default.
    #[arg(long, value_delimiter = ',')]
    u: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
struct CoverageArgs {
    /// Drift CSV; a symmetric sparse drift is generated when omitted.
    #[arg(long)]
    drift: Option<PathBuf>,
    #[arg(long, default_value_t = 5, value_parser = dimension)]
    d: usize,
    #[arg(long, default_value_t = 2, value_parser = dimension)]
    s: usize,
    /// Off-diagonal magnitude of the generated symmetric drift.
    #[arg(long, default_value_t = 0.3)]
    strength: f64,
    #[arg(long = "T", default_value_t = 200.0, value_parser = positive)]
    horizon: f64,
    #[arg(long, default_value_t = 0.01, value_parser = positive)]
    dt: f64,
    #[arg(long, default_value_t = 50, value_parser = dimension)]
    reps: usize,
    #[arg(long, default_value_t = 2.0)]
    lambda_gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    epsilon0: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Marks an error as caused by the arguments rather than the computation.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Cv(a) => commands::cv(&a),
        Command::Benchmark(a) => commands::benchmark(&a),
        Command::Finance(a) => commands::finance(&a),
        Command::Diagnostics(Diagnostic::ReConstant(a)) => commands::re_constant(&a),
        Command::Diagnostics(Diagnostic::DeviationBounds(a)) => commands::deviation_bounds(&a),
        Command::Diagnostics(Diagnostic::OracleCoverage(a)) => commands::oracle_coverage(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_choices() {
        assert_eq!(parse_lambda("cv"), Ok(LambdaChoice::Cv));
        assert_eq!(parse_lambda("theory"), Ok(LambdaChoice::Theory));
        assert_eq!(parse_lambda("0.25"), Ok(LambdaChoice::Fixed(0.25)));
        assert!(parse_lambda("-1").is_err());
        assert!(parse_lambda("inf").is_err());
    }

    #[test]
    fn numeric_guards() {
        assert!(dimension("0").is_err());
        assert_eq!(dimension("3"), Ok(3));
        assert!(positive("0").is_err());
        assert!(positive("nan").is_err());
    }

    #[test]
    fn command_tree_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn list_flags_split_on_commas() {
        let cli = Cli::try_parse_from(["sparse-ou", "benchmark", "--t-values", "10,100", "--out", "x.csv"]).unwrap();
        let Command::Benchmark(b) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(b.t_values, Some(vec![10.0, 100.0]));
    }
}
