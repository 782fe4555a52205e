use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, OuError, Result};
use crate::scalar::Scalar;

/// Dense `d x d` matrix stored row-major.
#[derive(Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawMatrix<T>")]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct SquareMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

/// Wire form: `{"dim": d, "entries": [row-major values]}`.
#[derive(Serialize, Deserialize)]
struct RawMatrix<T> {
    dim: usize,
    entries: Vec<T>,
}

impl<T: Scalar> TryFrom<RawMatrix<T>> for SquareMatrix<T> {
    type Error = OuError;

    fn try_from(raw: RawMatrix<T>) -> Result<Self> {
        Self::from_row_major(raw.dim, raw.entries)
    }
}

#[derive(Serialize)]
struct RawMatrixRef<'a, T> {
    dim: usize,
    entries: &'a [T],
}

impl<T: Serialize> Serialize for SquareMatrix<T> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        RawMatrixRef { dim: self.dim, entries: &self.data }.serialize(serializer)
    }
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![T::zero(); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![T::one(); dim])
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds a matrix from row-major entries, rejecting empty, ragged or
    /// non-finite input.
    pub fn from_row_major(dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return invalid("matrix dimension must be at least 1");
        }
        if data.len() != dim * dim {
            return invalid(format!("expected {} entries for a {dim}x{dim} matrix, got {}", dim * dim, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return invalid("matrix entries must be finite");
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return invalid("rows must all have length equal to the number of rows");
        }
        Self::from_row_major(dim, rows.concat())
    }

    /// Converts between scalar types (e.g. `f64` to `f32`).
    pub fn cast<U: Scalar>(&self) -> SquareMatrix<U> {
        SquareMatrix { dim: self.dim, data: self.data.iter().map(|v| U::of(v.as_f64())).collect() }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.dim).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)])
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        Self { dim: self.dim, data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() }
    }

    /// `(M + M^T) / 2`.
    pub fn symmetrize(&self) -> Self {
        let half = T::of(0.5);
        Self::from_fn(self.dim, |i, j| half * (self[(i, j)] + self[(j, i)]))
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Entrywise l1 norm.
    pub fn l1_norm(&self) -> T {
        self.data.iter().map(|v| v.abs()).sum()
    }

    /// Entrywise max norm.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Induced 1-norm (max column sum).
    pub fn norm_one(&self) -> T {
        (0..self.dim).map(|j| (0..self.dim).map(|i| self[(i, j)].abs()).sum::<T>()).fold(T::zero(), T::max)
    }

    /// Frobenius inner product `tr(A^T B)`.
    pub fn inner(&self, other: &Self) -> T {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Number of entries with `|x| > tol`.
    pub fn count_nonzero(&self, tol: T) -> usize {
        self.data.iter().filter(|v| v.abs() > tol).count()
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.dim, "dimension mismatch");
        (0..self.dim).map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum()).collect()
    }

    /// `x^T M x`.
    pub fn quadratic_form(&self, x: &[T]) -> T {
        self.matvec(x).iter().zip(x).map(|(&a, &b)| a * b).sum()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            let out_row = &mut out.data[i * d..(i + 1) * d];
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == T::zero() {
                    continue;
                }
                let b_row = &other.data[k * d..(k + 1) * d];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * other^T` without materialising the transpose.
    pub fn matmul_transpose(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        Self::from_fn(self.dim, |i, j| self.row(i).iter().zip(other.row(j)).map(|(&a, &b)| a * b).sum())
    }

    /// Submatrix on the index set `idx` (rows and columns).
    pub fn principal_submatrix(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), |a, b| self[(idx[a], idx[b])])
    }

    pub(crate) fn check_same_dim(&self, other: &Self, what: &str) -> Result<()> {
        if self.dim != other.dim {
            return invalid(format!("{what}: dimension mismatch ({} vs {})", self.dim, other.dim));
        }
        Ok(())
    }
}

impl<T> Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.dim + j]
    }
}

impl<T> IndexMut<(usize, usize)> for SquareMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.dim + j]
    }
}

impl<T: Scalar> Add for &SquareMatrix<T> {
    type Output = SquareMatrix<T>;
    fn add(self, rhs: Self) -> SquareMatrix<T> {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl<T: Scalar> Sub for &SquareMatrix<T> {
    type Output = SquareMatrix<T>;
    fn sub(self, rhs: Self) -> SquareMatrix<T> {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl<T: Scalar> Mul for &SquareMatrix<T> {
    type Output = SquareMatrix<T>;
    fn mul(self, rhs: Self) -> SquareMatrix<T> {
        self.matmul(rhs)
    }
}

impl<T: Scalar> Neg for &SquareMatrix<T> {
    type Output = SquareMatrix<T>;
    fn neg(self) -> SquareMatrix<T> {
        self.map(|v| -v)
    }
}

impl<T: Scalar> AddAssign<&SquareMatrix<T>> for SquareMatrix<T> {
    fn add_assign(&mut self, rhs: &SquareMatrix<T>) {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl<T: Scalar> SubAssign<&SquareMatrix<T>> for SquareMatrix<T> {
    fn sub_assign(&mut self, rhs: &SquareMatrix<T>) {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for SquareMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SquareMatrix {}x{} [", self.dim, self.dim)?;
        for row in self.data.chunks(self.dim.max(1)) {
            write!(f, "  ")?;
            for v in row {
                write!(f, "{v:>12.6?} ")?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}
