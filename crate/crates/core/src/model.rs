//! Ground-truth drift matrices and their stationary covariances.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, OuError, Result};
use crate::linops::{min_real_part, solve_lyapunov, SquareMatrix};
use crate::scalar::Scalar;
use crate::seed::rng_from_seed;

/// Stability margin added by [`stabilize`].
pub const STABILITY_MARGIN: f64 = 0.5;

/// A stable drift matrix `A` together with its stationary covariance
/// `C = solve_lyapunov(A)`.
#[derive(Clone, Debug)]
pub struct DriftMatrix<T> {
    matrix: SquareMatrix<T>,
    stationary_cov: SquareMatrix<T>,
}

impl<T: Scalar> DriftMatrix<T> {
    /// Validates stability and solves for the stationary covariance.
    pub fn new(matrix: SquareMatrix<T>) -> Result<Self> {
        let stationary_cov = solve_lyapunov(&matrix)?;
        Ok(Self { matrix, stationary_cov })
    }

    pub fn matrix(&self) -> &SquareMatrix<T> {
        &self.matrix
    }

    pub fn stationary_cov(&self) -> &SquareMatrix<T> {
        &self.stationary_cov
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn support(&self) -> SparsityPattern {
        SparsityPattern::of_matrix(&self.matrix, T::zero())
    }

    pub fn is_symmetric(&self) -> bool {
        self.matrix.max_asymmetry() == T::zero()
    }

    /// Writes the `d`-header CSV form: first line `d`, then `d` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dim();
        writeln!(w, "{d}")?;
        for i in 0..d {
            let row: Vec<String> = self.matrix.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true));
        let header = lines.next().ok_or_else(|| OuError::InvalidArgument("empty drift CSV".into()))??;
        let d: usize =
            header.trim().parse().map_err(|_| OuError::InvalidArgument(format!("bad dimension header {header:?}")))?;
        let mut entries = Vec::with_capacity(d * d);
        for (i, line) in lines.enumerate() {
            let line = line?;
            let row: Vec<T> = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map(T::of)
                        .map_err(|_| OuError::InvalidArgument(format!("bad value {s:?} on row {i}")))
                })
                .collect::<Result<_>>()?;
            if row.len() != d {
                return invalid(format!("row {i} has {} values, expected {d}", row.len()));
            }
            entries.extend(row);
        }
        Self::new(SquareMatrix::from_row_major(d, entries)?)
    }

    pub fn to_json(&self) -> Result<String>
    where
        T: Serialize,
    {
        Ok(serde_json::to_string_pretty(&self.matrix)?)
    }

    pub fn from_json(s: &str) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        Self::new(serde_json::from_str(s)?)
    }

    /// Uses a known closed-form stationary covariance instead of solving.
    pub(crate) fn with_stationary_cov(matrix: SquareMatrix<T>, stationary_cov: SquareMatrix<T>) -> Self {
        Self { matrix, stationary_cov }
    }
}

/// Support of a matrix and its maximal row count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityPattern {
    pub dim: usize,
    pub support: BTreeSet<(usize, usize)>,
    pub row_sparsity: usize,
}

impl SparsityPattern {
    pub fn new(dim: usize, support: BTreeSet<(usize, usize)>) -> Self {
        let mut counts = vec![0usize; dim];
        for &(i, _) in &support {
            counts[i] += 1;
        }
        let row_sparsity = counts.into_iter().max().unwrap_or(0);
        Self { dim, support, row_sparsity }
    }

    /// Entries with `|value| > tol`.
    pub fn of_matrix<T: Scalar>(m: &SquareMatrix<T>, tol: T) -> Self {
        let d = m.dim();
        let support =
            (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).filter(|&(i, j)| m[(i, j)].abs() > tol).collect();
        Self::new(d, support)
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.support.contains(&(i, j))
    }

    pub fn row_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.dim];
        for &(i, _) in &self.support {
            counts[i] += 1;
        }
        counts
    }
}

/// Random `+-1` pattern with exactly `s` nonzeros per row (diagonal
/// included), positions sampled without replacement.
pub fn sparse_sign_matrix<T: Scalar>(d: usize, s: usize, seed: u64) -> Result<SquareMatrix<T>> {
    if d == 0 || s == 0 || s > d {
        return invalid(format!("sparse drift needs 1 <= s <= d (got d={d}, s={s})"));
    }
    let mut rng = rng_from_seed(seed);
    let mut m = SquareMatrix::zeros(d);
    for i in 0..d {
        for j in sample(&mut rng, d, s) {
            m[(i, j)] = if rng.gen::<bool>() { T::one() } else { -T::one() };
        }
    }
    Ok(m)
}

/// Shifts the diagonal by `max(0, -min_re + margin)` so the spectrum sits at
/// least `margin` to the right of the imaginary axis.
pub fn stabilize<T: Scalar>(mut m: SquareMatrix<T>, margin: T) -> Result<SquareMatrix<T>> {
    let shift = (margin - min_real_part(&m)?).max(T::zero());
    for i in 0..m.dim() {
        m[(i, i)] += shift;
    }
    Ok(m)
}

/// Random row-`s`-sparse `+-1` drift, stabilised by a diagonal shift.
pub fn generate_sparse_drift<T: Scalar>(d: usize, s: usize, seed: u64) -> Result<DriftMatrix<T>> {
    let raw = sparse_sign_matrix::<T>(d, s, seed)?;
    let mut margin = T::of(STABILITY_MARGIN);
    for _ in 0..4 {
        let candidate = stabilize(raw.clone(), margin)?;
        match DriftMatrix::new(candidate) {
            Ok(drift) if min_real_part(drift.matrix())? > T::zero() => return Ok(drift),
            _ => margin *= T::of(2.0),
        }
    }
    Err(OuError::Generation(format!("could not stabilise sparse drift (d={d}, s={s}, seed={seed})")))
}

/// Two independent blocks `{0..d/2}` and `{d/2..d}`; within a block the
/// diagonal is `1` and the off-diagonal coupling is `-1/(block size)`.
pub fn generate_two_group<T: Scalar>(d: usize) -> Result<DriftMatrix<T>> {
    if d == 0 || !d.is_multiple_of(2) {
        return invalid(format!("two-group drift needs a positive even dimension (got {d})"));
    }
    let g = d / 2;
    let coupling = -T::one() / T::of_usize(g);
    let m = SquareMatrix::from_fn(d, |i, j| {
        if i == j {
            T::one()
        } else if i / g == j / g {
            coupling
        } else {
            T::zero()
        }
    });
    DriftMatrix::new(m)
}

/// `A = alpha I + w B` with `B` antisymmetric, entries in `{-1, 0, 1}` and
/// at most `s` nonzeros per row. Upper-triangle entries of `B` are `+1`;
/// the seed only picks which pairs are coupled. The stationary covariance
/// is exactly `I / (2 alpha)`.
pub fn generate_shifted_antisymmetric<T: Scalar>(
    d: usize,
    alpha: T,
    w: T,
    s: usize,
    seed: u64,
) -> Result<DriftMatrix<T>> {
    if d == 0 {
        return invalid("dimension must be at least 1");
    }
    if !(alpha > T::zero()) || !alpha.is_finite() {
        return invalid("alpha must be positive");
    }
    if !w.is_finite() {
        return invalid("w must be finite");
    }
    if s >= d {
        return invalid(format!("need s < d (got s={s}, d={d})"));
    }
    let mut pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| ((i + 1)..d).map(move |j| (i, j))).collect();
    pairs.shuffle(&mut rng_from_seed(seed));
    let mut counts = vec![0usize; d];
    let mut b = SquareMatrix::<T>::zeros(d);
    for (i, j) in pairs {
        if counts[i] < s && counts[j] < s {
            b[(i, j)] = T::one();
            b[(j, i)] = -T::one();
            counts[i] += 1;
            counts[j] += 1;
        }
    }
    let mut a = b.scale(w);
    for i in 0..d {
        a[(i, i)] += alpha;
    }
    let cov = SquareMatrix::identity(d).scale(T::one() / (T::of(2.0) * alpha));
    Ok(DriftMatrix::with_stationary_cov(a, cov))
}

/// Symmetric `A = I + strength * B` where `B` has random signs, zero
/// diagonal and at most `s - 1` off-diagonal entries per row, so every row
/// of `A` has at most `s` nonzeros.
pub fn generate_symmetric_sparse<T: Scalar>(d: usize, s: usize, strength: T, seed: u64) -> Result<DriftMatrix<T>> {
    if d == 0 || s == 0 || s > d {
        return invalid(format!("symmetric drift needs 1 <= s <= d (got d={d}, s={s})"));
    }
    if !(strength >= T::zero()) || !(strength * T::of_usize(s - 1) < T::one()) {
        return invalid("strength must satisfy 0 <= strength * (s - 1) < 1");
    }
    let mut rng = rng_from_seed(seed);
    let mut pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| ((i + 1)..d).map(move |j| (i, j))).collect();
    pairs.shuffle(&mut rng);
    let mut counts = vec![0usize; d];
    let mut a = SquareMatrix::<T>::identity(d);
    for (i, j) in pairs {
        if counts[i] + 1 < s && counts[j] + 1 < s {
            let v = if rng.gen::<bool>() { strength } else { -strength };
            a[(i, j)] = v;
            a[(j, i)] = v;
            counts[i] += 1;
            counts[j] += 1;
        }
    }
    DriftMatrix::new(a)
}
