//! Price ingestion and the mean-reverting model of smoothed log-returns
//! `dR = -A (R - m) dt + Sigma dW`.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, OuError, Result};
use crate::estimators::{diffusion_precision, SolverOptions};
use crate::linops::{cholesky, SquareMatrix};
use crate::model::{generate_sparse_drift, DriftMatrix};
use crate::modelsel::{cross_validate_weighted, CvResult, Method};
use crate::scalar::Scalar;
use crate::seed::{rng_from_seed, stream_seed};
use crate::sim::{sample_mean_reverting, Trajectory};

/// Relative jitter added to the quadratic variation before factorisation.
pub const QV_JITTER: f64 = 1e-10;

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Clone, Debug, PartialEq)]
pub struct PricePanel {
    pub tickers: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// One row per date, one column per ticker.
    pub prices: Vec<Vec<f64>>,
    /// Rows removed for missing or non-positive prices.
    pub dropped_rows: usize,
}

impl PricePanel {
    pub fn shape(&self) -> (usize, usize) {
        (self.dates.len(), self.tickers.len())
    }
}

/// Reads a `date,ticker1,...,tickerN` CSV (dates as `YYYY-MM-DD`).
pub fn load_prices(path: impl AsRef<Path>) -> Result<PricePanel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| OuError::Ingestion(format!("{}: {e}", path.display())))?;
    parse_prices(file)
}

pub fn parse_prices<R: Read>(reader: R) -> Result<PricePanel> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| OuError::Ingestion(format!("header: {e}")))?.clone();
    if header.len() < 2 {
        return Err(OuError::Ingestion("header needs a date column and at least one ticker".into()));
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    let mut dropped = 0;
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| OuError::Ingestion(format!("row {}: {e}", line + 2)))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let date = NaiveDate::parse_from_str(&record[0], DATE_FORMAT)
            .map_err(|e| OuError::Ingestion(format!("row {}: bad date '{}': {e}", line + 2, &record[0])))?;
        let values: Option<Vec<f64>> = (1..=tickers.len())
            .map(|k| record.get(k).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite() && *v > 0.0))
            .collect();
        match values {
            Some(v) if record.len() <= tickers.len() + 1 => rows.push((date, v)),
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        warn!("dropped {dropped} price rows with missing or non-positive values");
    }
    if rows.is_empty() {
        return Err(OuError::Ingestion("no usable price rows".into()));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(OuError::Ingestion(format!("duplicate date {}", w[0].0)));
    }
    let (dates, prices) = rows.into_iter().unzip();
    Ok(PricePanel { tickers, dates, prices, dropped_rows: dropped })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmaConfig {
    pub span: usize,
}

impl Default for EmaConfig {
    fn default() -> Self {
        Self { span: 10 }
    }
}

impl EmaConfig {
    pub fn new(span: usize) -> Result<Self> {
        if span == 0 {
            return invalid("EMA span must be at least 1");
        }
        Ok(Self { span })
    }

    /// `2 / (span + 1)`.
    pub fn alpha(&self) -> f64 {
        2.0 / (self.span as f64 + 1.0)
    }
}

/// Exponential moving average of daily log-returns, seeded at the first
/// return, as a trajectory with `dt = 1`.
pub fn ema_log_returns<T: Scalar>(panel: &PricePanel, cfg: &EmaConfig) -> Result<Trajectory<T>> {
    if cfg.span == 0 {
        return invalid("EMA span must be at least 1");
    }
    if panel.dates.len() < 3 {
        return invalid("need at least three dates to form two smoothed returns");
    }
    let d = panel.tickers.len();
    let alpha = cfg.alpha();
    let mut ema = vec![0.0; d];
    let mut states = Vec::with_capacity((panel.dates.len() - 1) * d);
    for (k, w) in panel.prices.windows(2).enumerate() {
        for j in 0..d {
            let r = (w[1][j] / w[0][j]).ln();
            ema[j] = if k == 0 { r } else { alpha * r + (1.0 - alpha) * ema[j] };
        }
        states.extend(ema.iter().map(|&v| T::of(v)));
    }
    Trajectory::new(d, T::one(), states)
}

/// Time-average of the states and the lower Cholesky factor of the
/// realised quadratic variation `(1/T) sum dR dR^T`.
pub fn estimate_mean_sigma<T: Scalar>(traj: &Trajectory<T>) -> Result<(Vec<T>, SquareMatrix<T>)> {
    if traj.len() < 2 {
        return invalid("need at least two states");
    }
    let d = traj.dim();
    let n = traj.steps();
    let mut mean = vec![T::zero(); d];
    for k in 0..n {
        for (m, &x) in mean.iter_mut().zip(traj.state(k)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= T::of_usize(n));

    let mut qv = SquareMatrix::zeros(d);
    let mut dx = vec![T::zero(); d];
    for k in 0..n {
        let (a, b) = (traj.state(k), traj.state(k + 1));
        for i in 0..d {
            dx[i] = b[i] - a[i];
        }
        for i in 0..d {
            for j in 0..d {
                qv[(i, j)] += dx[i] * dx[j];
            }
        }
    }
    let mut qv = qv.scale(T::one() / traj.horizon()).symmetrize();
    let jitter = T::of(QV_JITTER) * qv.trace() / T::of_usize(d);
    for i in 0..d {
        qv[(i, i)] += jitter;
    }
    let sigma = cholesky(&qv).map_err(|e| OuError::Numeric(format!("quadratic variation: {e}")))?;
    Ok((mean, sigma))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FinanceModel {
    pub tickers: Vec<String>,
    pub m: Vec<f64>,
    pub sigma: SquareMatrix<f64>,
    #[serde(rename = "A")]
    pub a: SquareMatrix<f64>,
    pub lambda: f64,
}

impl FinanceModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// EMA trajectory, `(m, Sigma)` estimates, then a diffusion-weighted fit with
/// the penalty chosen by hold-out validation.
pub fn fit_finance(
    panel: &PricePanel,
    ema: &EmaConfig,
    method: Method,
    gamma: f64,
    grid: &[f64],
    opts: &SolverOptions<f64>,
) -> Result<(FinanceModel, CvResult<f64>)> {
    let traj = ema_log_returns::<f64>(panel, ema)?;
    let (m, sigma) = estimate_mean_sigma(&traj)?;
    let precision = diffusion_precision(&sigma)?;
    let cv = cross_validate_weighted(&traj, method, gamma, grid, opts, Some(&m), Some(&precision))?;
    let model = FinanceModel {
        tickers: panel.tickers.clone(),
        m,
        sigma,
        a: cv.best_estimate.matrix.clone(),
        lambda: cv.best_lambda,
    };
    Ok((model, cv))
}

/// Known parameters `(A, m, Sigma)` for testing the pipeline on simulated
/// smoothed returns.
#[derive(Clone, Debug)]
pub struct SyntheticMarket {
    pub drift: DriftMatrix<f64>,
    pub mean: Vec<f64>,
    pub sigma: SquareMatrix<f64>,
}

/// Sparse stable drift with `s` nonzeros per row, mean entries uniform in
/// `[-1, 1]`, lower-triangular `Sigma` with diagonal in `[0.2, 0.4]` and
/// sub-diagonal entries in `[-0.1, 0.1]`.
pub fn synthetic_market(d: usize, s: usize, seed: u64) -> Result<SyntheticMarket> {
    let drift = generate_sparse_drift(d, s, stream_seed(seed, 0))?;
    let mut rng = rng_from_seed(stream_seed(seed, 1));
    let mean = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let mut sigma = SquareMatrix::zeros(d);
    for i in 0..d {
        for j in 0..i {
            sigma[(i, j)] = rng.gen_range(-0.1..=0.1);
        }
        sigma[(i, i)] = rng.gen_range(0.2..=0.4);
    }
    Ok(SyntheticMarket { drift, mean, sigma })
}

impl SyntheticMarket {
    pub fn sample(&self, horizon: f64, dt: f64, seed: u64) -> Result<Trajectory<f64>> {
        sample_mean_reverting(self.drift.matrix(), &self.mean, &self.sigma, horizon, dt, seed)
    }
}
