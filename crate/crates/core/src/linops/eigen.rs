//! Eigenvalues of general real matrices and the derived spectral summary.

use num_complex::Complex;
use serde::Serialize;

use crate::error::{invalid, OuError, Result};
use crate::scalar::Scalar;

use super::decomp::symmetric_eigenvalues;
use super::SquareMatrix;

/// Spectrum summary of a square matrix.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralInfo<T> {
    pub eigenvalues: Vec<Complex<T>>,
    pub min_real_part: T,
    /// Largest singular value.
    pub operator_norm: T,
}

pub fn spectral_info<T: Scalar>(a: &SquareMatrix<T>) -> Result<SpectralInfo<T>> {
    if !a.is_finite() {
        return invalid("spectral_info: non-finite entries");
    }
    let eigenvalues = eigenvalues(a)?;
    let min_real_part = eigenvalues.iter().map(|z| z.re).fold(T::infinity(), T::min);
    let operator_norm = operator_norm(a)?;
    Ok(SpectralInfo { eigenvalues, min_real_part, operator_norm })
}

/// Largest singular value, `sqrt(lambda_max(A^T A))`.
pub fn operator_norm<T: Scalar>(a: &SquareMatrix<T>) -> Result<T> {
    let gram = a.transpose().matmul(a);
    let vals = symmetric_eigenvalues(&gram)?;
    Ok(vals.last().copied().unwrap_or_else(T::zero).max(T::zero()).sqrt())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue<T: Scalar>(a: &SquareMatrix<T>) -> Result<T> {
    Ok(symmetric_eigenvalues(a)?[0])
}

/// Minimum real part of the spectrum.
pub fn min_real_part<T: Scalar>(a: &SquareMatrix<T>) -> Result<T> {
    Ok(eigenvalues(a)?.iter().map(|z| z.re).fold(T::infinity(), T::min))
}

/// All eigenvalues of a real matrix: balancing, reduction to upper
/// Hessenberg form by stabilised elementary similarity transforms, then the
/// shifted double-step QR iteration.
pub fn eigenvalues<T: Scalar>(a: &SquareMatrix<T>) -> Result<Vec<Complex<T>>> {
    let n = a.dim();
    let mut h: Vec<Vec<T>> = a.to_rows();
    balance(&mut h);
    to_hessenberg(&mut h);
    for i in 0..n {
        for j in 0..i.saturating_sub(1) {
            h[i][j] = T::zero();
        }
    }
    hessenberg_qr(&mut h)
}

fn balance<T: Scalar>(a: &mut [Vec<T>]) {
    let n = a.len();
    let radix = T::of(2.0);
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = T::zero();
            let mut c = T::zero();
            for j in 0..n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c != T::zero() && r != T::zero() {
                let mut g = r / radix;
                let mut f = T::one();
                let s = c + r;
                while c < g {
                    f *= radix;
                    c *= sqrdx;
                }
                g = r * radix;
                while c > g {
                    f /= radix;
                    c /= sqrdx;
                }
                if (c + r) / f < T::of(0.95) * s {
                    done = false;
                    let g = T::one() / f;
                    for j in 0..n {
                        a[i][j] *= g;
                    }
                    for row in a.iter_mut() {
                        row[i] *= f;
                    }
                }
            }
        }
    }
}

fn to_hessenberg<T: Scalar>(a: &mut [Vec<T>]) {
    let n = a.len();
    for m in 1..n.saturating_sub(1) {
        let mut x = T::zero();
        let mut i = m;
        for j in m..n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                i = j;
            }
        }
        if i != m {
            for j in (m - 1)..n {
                let tmp = a[i][j];
                a[i][j] = a[m][j];
                a[m][j] = tmp;
            }
            for row in a.iter_mut() {
                row.swap(i, m);
            }
        }
        if x != T::zero() {
            for i in (m + 1)..n {
                let mut y = a[i][m - 1];
                if y != T::zero() {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..n {
                        let t = a[m][j];
                        a[i][j] -= y * t;
                    }
                    for row in a.iter_mut() {
                        let t = row[i];
                        row[m] += y * t;
                    }
                }
            }
        }
    }
}

#[inline]
fn sign<T: Scalar>(a: T, b: T) -> T {
    if b >= T::zero() {
        a.abs()
    } else {
        -a.abs()
    }
}

fn hessenberg_qr<T: Scalar>(a: &mut [Vec<T>]) -> Result<Vec<Complex<T>>> {
    let n = a.len();
    let mut wr = vec![T::zero(); n];
    let mut wi = vec![T::zero(); n];
    let mut anorm = T::zero();
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n as isize - 1;
    let mut t = T::zero();
    let half = T::of(0.5);
    while nn >= 0 {
        let mut its = 0usize;
        loop {
            let nu = nn as usize;
            // Locate a negligible subdiagonal element.
            let mut l = nu;
            while l >= 1 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == T::zero() {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = T::zero();
                    break;
                }
                l -= 1;
            }
            let mut x = a[nu][nu];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = T::zero();
                nn -= 1;
                break;
            }
            let mut y = a[nu - 1][nu - 1];
            let mut w = a[nu][nu - 1] * a[nu - 1][nu];
            if l == nu - 1 {
                let p = half * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= T::zero() {
                    z = p + sign(z, p);
                    wr[nu - 1] = x + z;
                    wr[nu] = x + z;
                    if z != T::zero() {
                        wr[nu] = x - w / z;
                    }
                    wi[nu - 1] = T::zero();
                    wi[nu] = T::zero();
                } else {
                    wr[nu - 1] = x + p;
                    wr[nu] = x + p;
                    wi[nu - 1] = -z;
                    wi[nu] = z;
                }
                nn -= 2;
                break;
            }
            if its == 60 {
                return Err(OuError::Numeric("QR eigenvalue iteration did not converge".into()));
            }
            if its == 10 || its == 20 || its == 40 {
                // Exceptional shift.
                t += x;
                for (i, row) in a.iter_mut().enumerate().take(nu + 1) {
                    row[i] -= x;
                }
                let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                x = T::of(0.75) * s;
                y = x;
                w = T::of(-0.4375) * s * s;
            }
            its += 1;
            let (mut p, mut q, mut r);
            let mut m = nu - 2;
            loop {
                let z = a[m][m];
                let r0 = x - z;
                let s0 = y - z;
                p = (r0 * s0 - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - r0 - s0;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nu {
                a[i][i - 2] = T::zero();
                if i != m + 2 {
                    a[i][i - 3] = T::zero();
                }
            }
            let mut k = m;
            while k < nu {
                let mut xk = T::zero();
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = T::zero();
                    if k + 1 != nu {
                        r = a[k + 2][k - 1];
                    }
                    xk = p.abs() + q.abs() + r.abs();
                    if xk != T::zero() {
                        p /= xk;
                        q /= xk;
                        r /= xk;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != T::zero() {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * xk;
                    }
                    p += s;
                    let xs = p / s;
                    let ys = q / s;
                    let zs = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pp = a[k][j] + q * a[k + 1][j];
                        if k + 1 != nu {
                            pp += r * a[k + 2][j];
                            a[k + 2][j] -= pp * zs;
                        }
                        a[k + 1][j] -= pp * ys;
                        a[k][j] -= pp * xs;
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for row in a.iter_mut().take(mmin + 1).skip(l) {
                        let mut pp = xs * row[k] + ys * row[k + 1];
                        if k + 1 != nu {
                            pp += zs * row[k + 2];
                            row[k + 2] -= pp * r;
                        }
                        row[k + 1] -= pp * q;
                        row[k] -= pp;
                    }
                }
                k += 1;
            }
            if nn < 0 {
                break;
            }
        }
    }
    Ok(wr.into_iter().zip(wi).map(|(re, im)| Complex::new(re, im)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sorted_re_im(mut v: Vec<Complex<f64>>) -> Vec<(f64, f64)> {
        v.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
        v.into_iter().map(|z| (z.re, z.im)).collect()
    }

    #[test]
    fn identity_spectrum() {
        let info = spectral_info(&SquareMatrix::<f64>::identity(4)).unwrap();
        assert!(info.eigenvalues.iter().all(|z| (z.re - 1.0).abs() < 1e-14 && z.im == 0.0));
        assert_relative_eq!(info.min_real_part, 1.0, epsilon = 1e-14);
        assert_relative_eq!(info.operator_norm, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rotation_has_imaginary_pair() {
        let a = SquareMatrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let info = spectral_info(&a).unwrap();
        let ev = sorted_re_im(info.eigenvalues);
        assert!(ev[0].0.abs() < 1e-14 && (ev[0].1 + 1.0).abs() < 1e-14);
        assert!(ev[1].0.abs() < 1e-14 && (ev[1].1 - 1.0).abs() < 1e-14);
        assert!(info.min_real_part.abs() < 1e-14);
    }

    #[test]
    fn diagonal_spectrum_and_norm() {
        let info = spectral_info(&SquareMatrix::from_diag(&[1.0, 2.0, 3.0])).unwrap();
        assert_relative_eq!(info.min_real_part, 1.0, epsilon = 1e-14);
        assert_relative_eq!(info.operator_norm, 3.0, epsilon = 1e-13);
    }

    #[test]
    fn companion_matrix_roots() {
        // x^3 - 6x^2 + 11x - 6 = (x-1)(x-2)(x-3)
        let a = SquareMatrix::from_rows(&[vec![6.0, -11.0, 6.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let ev = sorted_re_im(eigenvalues(&a).unwrap());
        for (got, want) in ev.iter().zip([1.0, 2.0, 3.0]) {
            assert_relative_eq!(got.0, want, epsilon = 1e-10);
            assert!(got.1.abs() < 1e-10);
        }
    }

    #[test]
    fn trace_and_determinant_are_preserved() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for d in [5usize, 12, 30] {
            let a = SquareMatrix::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            let ev = eigenvalues(&a).unwrap();
            let sum: Complex<f64> = ev.iter().sum();
            assert!((sum.re - a.trace()).abs() < 1e-10 * d as f64);
            assert!(sum.im.abs() < 1e-10 * d as f64);
            let prod = ev.iter().fold(Complex::new(1.0, 0.0), |acc, z| acc * z);
            let det = real_det(&a);
            assert!((prod.re - det).abs() < 1e-8 * det.abs().max(1.0));
            let sq: Complex<f64> = ev.iter().map(|z| z * z).sum();
            assert!((sq.re - a.matmul(&a).trace()).abs() < 1e-9 * d as f64);
        }
    }

    fn real_det(m: &SquareMatrix<f64>) -> f64 {
        let n = m.dim();
        let mut a = m.to_rows();
        let mut det = 1.0;
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap()).unwrap();
            if p != k {
                a.swap(p, k);
                det = -det;
            }
            let piv = a[k][k];
            det *= piv;
            for i in (k + 1)..n {
                let f = a[i][k] / piv;
                for j in k..n {
                    let t = a[k][j];
                    a[i][j] -= f * t;
                }
            }
        }
        det
    }
}
