//! LU, Cholesky and symmetric eigendecompositions.

use crate::error::{OuError, Result};
use crate::scalar::Scalar;

use super::SquareMatrix;

/// LU factorisation with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    lu: SquareMatrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn new(a: &SquareMatrix<T>) -> Result<Self> {
        let n = a.dim();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(T::min_positive_value());
        let tiny = T::epsilon() * T::of_usize(n) * scale * T::of(1e-6);
        for k in 0..n {
            let (p, pivot) =
                (k..n)
                    .map(|i| (i, lu[(i, k)].abs()))
                    .fold((k, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pivot > tiny) {
                return Err(OuError::Numeric(format!(
                    "singular matrix in LU factorisation (pivot {:e} at column {k})",
                    pivot.as_f64()
                )));
            }
            if p != k {
                perm.swap(p, k);
                let data = lu.as_mut_slice();
                for j in 0..n {
                    data.swap(p * n + j, k * n + j);
                }
            }
            let data = lu.as_mut_slice();
            let inv = T::one() / data[k * n + k];
            for i in (k + 1)..n {
                let f = data[i * n + k] * inv;
                data[i * n + k] = f;
                if f == T::zero() {
                    continue;
                }
                for j in (k + 1)..n {
                    let u = data[k * n + j];
                    data[i * n + j] -= f * u;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve_vec(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.dim();
        let data = self.lu.as_slice();
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= data[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= data[i * n + j] * x[j];
            }
            x[i] = s / data[i * n + i];
        }
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: &SquareMatrix<T>) -> SquareMatrix<T> {
        let n = b.dim();
        let mut out = SquareMatrix::zeros(n);
        for j in 0..n {
            let col: Vec<T> = (0..n).map(|i| b[(i, j)]).collect();
            let x = self.solve_vec(&col);
            for i in 0..n {
                out[(i, j)] = x[i];
            }
        }
        out
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky<T: Scalar>(a: &SquareMatrix<T>) -> Result<SquareMatrix<T>> {
    let n = a.dim();
    let mut l = SquareMatrix::zeros(n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > T::zero()) || !diag.is_finite() {
            return Err(OuError::Numeric(format!(
                "matrix not positive definite (pivot {:e} at row {j})",
                diag.as_f64()
            )));
        }
        let d = diag.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Cholesky after symmetrisation, retrying once with `jitter * I` added.
pub fn cholesky_jittered<T: Scalar>(a: &SquareMatrix<T>, jitter: T) -> Result<SquareMatrix<T>> {
    let sym = a.symmetrize();
    match cholesky(&sym) {
        Ok(l) => Ok(l),
        Err(_) => {
            let mut shifted = sym;
            for i in 0..shifted.dim() {
                shifted[(i, i)] += jitter;
            }
            cholesky(&shifted)
        }
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// the columns of the second matrix.
pub fn symmetric_eigen<T: Scalar>(a: &SquareMatrix<T>) -> Result<(Vec<T>, SquareMatrix<T>)> {
    let n = a.dim();
    let mut m = a.symmetrize();
    let mut v = SquareMatrix::identity(n);
    let scale = m.frobenius_norm();
    if scale == T::zero() {
        return Ok((vec![T::zero(); n], v));
    }
    let threshold = T::epsilon() * T::of(0.5) * scale;
    let mut converged = false;
    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(OuError::Numeric("Jacobi eigensolver did not converge".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = SquareMatrix::from_fn(n, |r, c| v[(r, order[c])]);
    Ok((values, vectors))
}

/// Eigenvalues only, ascending.
pub fn symmetric_eigenvalues<T: Scalar>(a: &SquareMatrix<T>) -> Result<Vec<T>> {
    symmetric_eigen(a).map(|(values, _)| values)
}
