//! Exact-transition sampling of Ornstein-Uhlenbeck paths.
//!
//! Over a step `dt` the process `dX = -A X dt + S dW` (with `S S^T = Q`) is
//! Gaussian: `X_{k+1} = Phi X_k + noise`, `Phi = exp(-A dt)`, and the noise
//! covariance is `C - Phi C Phi^T` where `A C + C A^T = Q`. Sampling is
//! therefore free of discretisation bias, and a coarse grid obtained by
//! subsampling a fine path has exactly the coarse-grid law.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{invalid, OuError, Result};
use crate::linops::{cholesky, cholesky_jittered, matrix_exponential, solve_lyapunov_with_rhs, SquareMatrix};
use crate::model::DriftMatrix;
use crate::scalar::Scalar;
use crate::seed::rng_from_seed;

/// Jitter added to the one-step covariance when its Cholesky factorisation
/// fails (tiny `dt`).
pub const CHOLESKY_JITTER: f64 = 1e-12;

/// Uniformly sampled path: `n + 1` states of dimension `dim`, spacing `dt`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory<T> {
    dim: usize,
    dt: T,
    states: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    /// `states` holds the path row-major: state `k` is
    /// `states[k*dim..(k+1)*dim]`.
    pub fn new(dim: usize, dt: T, states: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return invalid("trajectory dimension must be at least 1");
        }
        if !(dt > T::zero()) || !dt.is_finite() {
            return invalid("dt must be positive and finite");
        }
        if !states.len().is_multiple_of(dim) {
            return invalid("state buffer length is not a multiple of the dimension");
        }
        if states.len() / dim < 2 {
            return invalid("a trajectory needs at least two states");
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(OuError::Numeric("trajectory contains non-finite states".into()));
        }
        Ok(Self { dim, dt, states })
    }

    pub fn from_states(dt: T, states: &[Vec<T>]) -> Result<Self> {
        let dim = states.first().map_or(0, Vec::len);
        if states.iter().any(|s| s.len() != dim) {
            return invalid("states have inconsistent dimensions");
        }
        Self::new(dim, dt, states.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Number of steps `n` (one less than the number of states).
    pub fn steps(&self) -> usize {
        self.len() - 1
    }

    /// Number of states `n + 1`.
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `T = n dt`.
    pub fn horizon(&self) -> T {
        T::of_usize(self.steps()) * self.dt
    }

    pub fn state(&self, k: usize) -> &[T] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[T]> {
        self.states.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[T] {
        &self.states
    }

    /// States `start..=end` as a new trajectory (shared endpoint semantics).
    pub fn segment(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end >= self.len() {
            return invalid(format!("segment {start}..={end} invalid for {} states", self.len()));
        }
        Self::new(self.dim, self.dt, self.states[start * self.dim..(end + 1) * self.dim].to_vec())
    }

    /// Writes `t,x0,...,x{d-1}` CSV at full precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> =
            std::iter::once("t".to_string()).chain((0..self.dim).map(|i| format!("x{i}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for (k, x) in self.states().enumerate() {
            let t = self.dt * T::of_usize(k);
            write!(w, "{}", t)?;
            for v in x {
                write!(w, ",{}", v)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads the CSV written by [`Trajectory::write_csv`]; the time column
    /// must be uniformly spaced.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
        let headers = reader.headers()?.clone();
        if headers.get(0) != Some("t") || headers.len() < 2 {
            return invalid("trajectory CSV must start with a `t` column followed by states");
        }
        let dim = headers.len() - 1;
        let mut times = Vec::new();
        let mut states = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            let mut values = rec.iter().map(|s| {
                s.parse::<f64>().map_err(|_| OuError::InvalidArgument(format!("bad number {s:?} on data row {row}")))
            });
            times.push(values.next().transpose()?.unwrap_or(f64::NAN));
            for v in values {
                states.push(T::of(v?));
            }
        }
        if times.len() < 2 {
            return invalid("trajectory CSV needs at least two rows");
        }
        let n = times.len() - 1;
        let dt = (times[n] - times[0]) / n as f64;
        for (k, &t) in times.iter().enumerate() {
            if (t - (times[0] + k as f64 * dt)).abs() > 1e-6 * dt.max(1e-300) {
                return invalid(format!("time column is not uniformly spaced at row {k}"));
            }
        }
        Self::new(dim, T::of(dt), states)
    }
}

/// Exact one-step Gaussian transition.
#[derive(Clone, Debug)]
pub struct TransitionKernel<T> {
    /// `exp(-A dt)`
    pub phi: SquareMatrix<T>,
    /// One-step conditional covariance.
    pub noise_cov: SquareMatrix<T>,
    /// Lower Cholesky factor of `noise_cov`.
    pub noise_chol: SquareMatrix<T>,
}

impl<T: Scalar> TransitionKernel<T> {
    /// Kernel of `dX = -A X dt + S dW` with `S S^T = diffusion`, given the
    /// stationary covariance `stationary_cov` solving `A C + C A^T = diffusion`.
    pub fn from_parts(a: &SquareMatrix<T>, stationary_cov: &SquareMatrix<T>, dt: T) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return invalid("dt must be positive and finite");
        }
        let phi = matrix_exponential(a, -dt)?;
        let mut q = stationary_cov.clone();
        q -= &phi.matmul(stationary_cov).matmul_transpose(&phi);
        let noise_cov = q.symmetrize();
        let noise_chol = cholesky_jittered(&noise_cov, T::of(CHOLESKY_JITTER))
            .map_err(|e| OuError::Numeric(format!("one-step covariance factorisation: {e}")))?;
        Ok(Self { phi, noise_cov, noise_chol })
    }

    /// Advances one step given a standard normal draw `xi`.
    pub fn step(&self, x: &[T], xi: &[T], out: &mut [T]) {
        let d = x.len();
        let phi = self.phi.as_slice();
        let chol = self.noise_chol.as_slice();
        for i in 0..d {
            let mut acc = T::zero();
            for j in 0..d {
                acc += phi[i * d + j] * x[j];
            }
            for j in 0..=i {
                acc += chol[i * d + j] * xi[j];
            }
            out[i] = acc;
        }
    }
}

pub fn transition_kernel<T: Scalar>(drift: &DriftMatrix<T>, dt: T) -> Result<TransitionKernel<T>> {
    TransitionKernel::from_parts(drift.matrix(), drift.stationary_cov(), dt)
}

fn standard_normals<T: Scalar, R: Rng>(rng: &mut R, buf: &mut [T]) {
    for v in buf.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = T::of(z);
    }
}

fn step_count<T: Scalar>(horizon: T, dt: T) -> Result<usize> {
    if !(dt > T::zero()) || !dt.is_finite() || !horizon.is_finite() {
        return invalid("horizon and dt must be finite with dt > 0");
    }
    if horizon < dt {
        return invalid("horizon must be at least one time step");
    }
    let ratio = (horizon / dt).as_f64();
    let n = ratio.round();
    if (ratio - n).abs() > 1e-6 * n.max(1.0) {
        return invalid(format!("horizon is not an integer multiple of dt (T/dt = {ratio})"));
    }
    Ok(n as usize)
}

/// Runs `n` steps of `kernel` from `x0`, drawing from `rng`.
pub fn sample_with_kernel<T: Scalar, R: Rng>(
    kernel: &TransitionKernel<T>,
    x0: &[T],
    n: usize,
    dt: T,
    rng: &mut R,
) -> Result<Trajectory<T>> {
    let d = x0.len();
    let mut states = Vec::with_capacity((n + 1) * d);
    states.extend_from_slice(x0);
    let mut xi = vec![T::zero(); d];
    let mut next = vec![T::zero(); d];
    for k in 0..n {
        standard_normals(rng, &mut xi);
        kernel.step(&states[k * d..(k + 1) * d], &xi, &mut next);
        states.extend_from_slice(&next);
    }
    Trajectory::new(d, dt, states)
}

/// Samples `dX = -A X dt + dW` on `[0, T]` at spacing `dt`.
///
/// Without `init` the initial state is drawn from the stationary law
/// `N(0, C)`. Output depends only on the arguments.
pub fn sample_trajectory<T: Scalar>(
    drift: &DriftMatrix<T>,
    horizon: T,
    dt: T,
    seed: u64,
    init: Option<&[T]>,
) -> Result<Trajectory<T>> {
    let n = step_count(horizon, dt)?;
    let kernel = transition_kernel(drift, dt)?;
    sample_from_kernel(&kernel, drift.stationary_cov(), n, dt, seed, init)
}

/// Samples `dR = -A (R - m) dt + Sigma dW` with exact transitions, starting
/// from the stationary law `N(m, C)` where `A C + C A^T = Sigma Sigma^T`.
pub fn sample_mean_reverting<T: Scalar>(
    a: &SquareMatrix<T>,
    mean: &[T],
    sigma: &SquareMatrix<T>,
    horizon: T,
    dt: T,
    seed: u64,
) -> Result<Trajectory<T>> {
    if mean.len() != a.dim() {
        return invalid("mean vector length does not match the drift dimension");
    }
    a.check_same_dim(sigma, "sample_mean_reverting")?;
    let n = step_count(horizon, dt)?;
    let diffusion = sigma.matmul_transpose(sigma);
    let cov = solve_lyapunov_with_rhs(a, &diffusion)?;
    let kernel = TransitionKernel::from_parts(a, &cov, dt)?;
    let centred = sample_from_kernel(&kernel, &cov, n, dt, seed, None)?;
    let d = a.dim();
    let shifted = centred.as_flat().chunks_exact(d).flat_map(|x| x.iter().zip(mean).map(|(&v, &m)| v + m)).collect();
    Trajectory::new(d, dt, shifted)
}

fn sample_from_kernel<T: Scalar>(
    kernel: &TransitionKernel<T>,
    stationary_cov: &SquareMatrix<T>,
    n: usize,
    dt: T,
    seed: u64,
    init: Option<&[T]>,
) -> Result<Trajectory<T>> {
    let d = stationary_cov.dim();
    let mut rng = rng_from_seed(seed);
    let x0 = match init {
        Some(x) => {
            if x.len() != d {
                return invalid(format!("initial state has length {}, expected {d}", x.len()));
            }
            x.to_vec()
        }
        None => {
            let l = cholesky(&stationary_cov.symmetrize())
                .map_err(|e| OuError::Numeric(format!("stationary covariance factorisation: {e}")))?;
            let mut z = vec![T::zero(); d];
            standard_normals(&mut rng, &mut z);
            (0..d).map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum()).collect()
        }
    };
    sample_with_kernel(kernel, &x0, n, dt, &mut rng)
}

/// Keeps every `factor`-th state; the new spacing is `factor * dt`.
pub fn subsample<T: Scalar>(traj: &Trajectory<T>, factor: usize) -> Result<Trajectory<T>> {
    if factor == 0 {
        return invalid("subsampling factor must be at least 1");
    }
    let n = traj.steps();
    if !n.is_multiple_of(factor) {
        return invalid(format!("factor {factor} does not divide the step count {n}"));
    }
    let d = traj.dim();
    let states = (0..=n / factor).flat_map(|k| traj.state(k * factor).iter().copied()).collect::<Vec<_>>();
    debug_assert_eq!(states.len(), (n / factor + 1) * d);
    Trajectory::new(d, traj.dt() * T::of_usize(factor), states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_shifted_antisymmetric, generate_sparse_drift};
    use approx::assert_relative_eq;

    fn scalar_drift(a: f64) -> DriftMatrix<f64> {
        DriftMatrix::new(SquareMatrix::from_diag(&[a])).unwrap()
    }

    #[test]
    fn scalar_kernel_formulas() {
        let k = transition_kernel(&scalar_drift(1.0), 0.1).unwrap();
        assert_relative_eq!(k.phi[(0, 0)], (-0.1f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(k.noise_cov[(0, 0)], (1.0 - (-0.2f64).exp()) / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn isotropic_kernel() {
        let drift = generate_shifted_antisymmetric::<f64>(3, 0.5, 0.0, 1, 0).unwrap();
        let k = transition_kernel(&drift, 1.0).unwrap();
        let phi = SquareMatrix::identity(3).scale((-0.5f64).exp());
        let q = SquareMatrix::identity(3).scale(1.0 - (-1.0f64).exp());
        assert!((&k.phi - &phi).frobenius_norm() < 1e-14);
        assert!((&k.noise_cov - &q).frobenius_norm() < 1e-13);
        let back = k.noise_chol.matmul_transpose(&k.noise_chol);
        assert!((&back - &k.noise_cov).frobenius_norm() < 1e-10);
    }

    #[test]
    fn small_step_covariance_is_dt_identity_to_second_order() {
        let drift = generate_sparse_drift::<f64>(6, 2, 4).unwrap();
        let mut residuals = Vec::new();
        for &dt in &[0.04, 0.02, 0.01] {
            let k = transition_kernel(&drift, dt).unwrap();
            let r = (&k.noise_cov - &SquareMatrix::identity(6).scale(dt)).frobenius_norm();
            residuals.push(r / (dt * dt));
        }
        // residual / dt^2 approaches the constant ||A + A^T|| / 2 scale
        let c = residuals[2];
        assert!(residuals.iter().all(|r| (r - c).abs() < 0.1 * c));
    }

    #[test]
    fn semigroup_property() {
        let drift = generate_sparse_drift::<f64>(7, 3, 5).unwrap();
        let k1 = transition_kernel(&drift, 0.05).unwrap();
        let k2 = transition_kernel(&drift, 0.1).unwrap();
        assert!((&k2.phi - &k1.phi.matmul(&k1.phi)).frobenius_norm() < 1e-10);
    }

    #[test]
    fn zero_noise_from_origin_stays_at_origin() {
        let drift = generate_sparse_drift::<f64>(3, 2, 1).unwrap();
        let mut k = transition_kernel(&drift, 0.1).unwrap();
        k.noise_chol = SquareMatrix::zeros(3);
        k.noise_cov = SquareMatrix::zeros(3);
        let mut rng = rng_from_seed(0);
        let traj = sample_with_kernel(&k, &[0.0; 3], 50, 0.1, &mut rng).unwrap();
        assert!(traj.as_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_stationary_variance() {
        let traj = sample_trajectory(&scalar_drift(1.0), 1000.0, 0.01, 3, None).unwrap();
        assert_eq!(traj.len(), 100_001);
        let n = traj.len() as f64;
        let mean = traj.as_flat().iter().sum::<f64>() / n;
        let var = traj.as_flat().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!((var - 0.5).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn determinism_and_init() {
        let drift = generate_sparse_drift::<f64>(4, 2, 8).unwrap();
        let a = sample_trajectory(&drift, 2.0, 0.01, 77, None).unwrap();
        let b = sample_trajectory(&drift, 2.0, 0.01, 77, None).unwrap();
        assert_eq!(a, b);
        let c = sample_trajectory(&drift, 2.0, 0.01, 77, Some(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(c.state(0), &[1.0, 2.0, 3.0, 4.0]);
        assert!(sample_trajectory(&drift, 2.0, 0.01, 77, Some(&[1.0])).is_err());
        assert!(sample_trajectory(&drift, 0.001, 0.01, 77, None).is_err());
    }

    #[test]
    fn subsampling_counts_and_composition() {
        let drift = generate_sparse_drift::<f64>(2, 1, 8).unwrap();
        let traj = sample_trajectory(&drift, 1.0, 0.01, 1, None).unwrap();
        assert_eq!(subsample(&traj, 1).unwrap(), traj);
        let coarse = subsample(&traj, 10).unwrap();
        assert_eq!(coarse.len(), 11);
        assert_relative_eq!(coarse.dt(), 0.1, max_relative = 1e-15);
        let nested = subsample(&subsample(&traj, 10).unwrap(), 10).unwrap();
        let direct = subsample(&traj, 100).unwrap();
        assert_eq!(nested.as_flat(), direct.as_flat());
        assert!(subsample(&traj, 7).is_err());
        assert!(subsample(&traj, 0).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let drift = generate_sparse_drift::<f64>(3, 2, 2).unwrap();
        let traj = sample_trajectory(&drift, 0.5, 0.01, 9, None).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x0,x1,x2\n"));
        let back = Trajectory::<f64>::read_csv(&buf[..]).unwrap();
        assert_eq!(back.as_flat(), traj.as_flat());
        assert_relative_eq!(back.dt(), traj.dt(), max_relative = 1e-12);
    }
}
