//! Continuous Lyapunov equation `A C + C A^T = Q` for stable `A`.

use crate::error::{invalid, OuError, Result};
use crate::scalar::Scalar;

use super::decomp::Lu;
use super::eigen::min_real_part;
use super::SquareMatrix;

/// Largest dimension solved through the dense `d^2 x d^2` Kronecker system.
/// Above it the sign-function iteration is used (O(d^3) per step).
pub const KRONECKER_MAX_DIM: usize = 20;

/// Stationary covariance `C` solving `A C + C A^T = I`.
pub fn solve_lyapunov<T: Scalar>(a: &SquareMatrix<T>) -> Result<SquareMatrix<T>> {
    solve_lyapunov_with_rhs(a, &SquareMatrix::identity(a.dim()))
}

/// Solves `A C + C A^T = Q` for symmetric `Q`; all eigenvalues of `A` must
/// have strictly positive real part.
pub fn solve_lyapunov_with_rhs<T: Scalar>(a: &SquareMatrix<T>, q: &SquareMatrix<T>) -> Result<SquareMatrix<T>> {
    a.check_same_dim(q, "solve_lyapunov")?;
    if !a.is_finite() || !q.is_finite() {
        return invalid("solve_lyapunov: non-finite input");
    }
    let mrp = min_real_part(a)?;
    if !(mrp > T::zero()) {
        return Err(OuError::Unstable { min_real_part: mrp.as_f64() });
    }
    let c = if a.dim() <= KRONECKER_MAX_DIM { kronecker_solve(a, q)? } else { sign_function_solve(a, q)? };
    Ok(c.symmetrize())
}

/// `(A (x) I + I (x) A) vec(C) = vec(Q)` with row-major `vec`.
pub fn kronecker_solve<T: Scalar>(a: &SquareMatrix<T>, q: &SquareMatrix<T>) -> Result<SquareMatrix<T>> {
    let d = a.dim();
    let n = d * d;
    let mut k = SquareMatrix::zeros(n);
    for i in 0..d {
        for j in 0..d {
            let row = i * d + j;
            // (A C)_{ij} = sum_m A_{im} C_{mj}
            for m in 0..d {
                k[(row, m * d + j)] += a[(i, m)];
            }
            // (C A^T)_{ij} = sum_m C_{im} A_{jm}
            for m in 0..d {
                k[(row, i * d + m)] += a[(j, m)];
            }
        }
    }
    let x =
        Lu::new(&k).map_err(|e| OuError::Numeric(format!("Kronecker Lyapunov system: {e}")))?.solve_vec(q.as_slice());
    SquareMatrix::from_row_major(d, x)
        .map_err(|_| OuError::Numeric("Kronecker Lyapunov solve produced non-finite values".into()))
}

/// Matrix sign-function iteration followed by one residual correction.
pub fn sign_function_solve<T: Scalar>(a: &SquareMatrix<T>, q: &SquareMatrix<T>) -> Result<SquareMatrix<T>> {
    let mut c = sign_iterate(a, q)?;
    let mut residual = q.clone();
    residual -= &a.matmul(&c);
    residual -= &c.matmul_transpose(a);
    c += &sign_iterate(a, &residual.symmetrize())?;
    let err = lyapunov_residual(a, &c, q);
    if !(err <= T::of(1e-6) * q.frobenius_norm().max(T::one())) {
        return Err(OuError::Numeric(format!("sign-function Lyapunov residual {:e} too large", err.as_f64())));
    }
    Ok(c)
}

/// `A_{k+1} = (A_k + A_k^{-1})/2`, `Q_{k+1} = (Q_k + A_k^{-1} Q_k A_k^{-T})/2`
/// preserves `A_k C + C A_k^T = Q_k`; `A_k -> I`, so `C = Q_inf / 2`.
fn sign_iterate<T: Scalar>(a: &SquareMatrix<T>, q: &SquareMatrix<T>) -> Result<SquareMatrix<T>> {
    let d = a.dim();
    let ident = SquareMatrix::identity(d);
    let half = T::of(0.5);
    let mut ak = a.clone();
    let mut qk = q.clone();
    let tol = T::of(10.0) * T::epsilon() * T::of_usize(d).sqrt();
    let mut prev_change = T::infinity();
    for _ in 0..100 {
        let inv = Lu::new(&ak)?.solve_mat(&ident);
        let next_q = (&qk + &inv.matmul(&qk).matmul_transpose(&inv)).scale(half).symmetrize();
        let next_a = (&ak + &inv).scale(half);
        let change = (&next_a - &ak).frobenius_norm() / next_a.frobenius_norm();
        ak = next_a;
        qk = next_q;
        // Quadratic convergence stalls at roundoff level.
        if change <= tol || (change < T::of(1e-8) && change >= prev_change) {
            return Ok(qk.scale(half));
        }
        prev_change = change;
    }
    Err(OuError::Numeric("sign-function Lyapunov iteration did not converge".into()))
}

/// `||A C + C A^T - Q||_F`.
pub fn lyapunov_residual<T: Scalar>(a: &SquareMatrix<T>, c: &SquareMatrix<T>, q: &SquareMatrix<T>) -> T {
    let ac = a.matmul(c);
    let mut r = &ac + &c.matmul_transpose(a);
    r -= q;
    r.frobenius_norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_case() {
        let c = solve_lyapunov(&SquareMatrix::from_diag(&[2.5])).unwrap();
        assert_relative_eq!(c[(0, 0)], 1.0 / 5.0, epsilon = 1e-15);
    }

    #[test]
    fn shifted_antisymmetric_gives_scaled_identity() {
        let a = SquareMatrix::from_rows(&[vec![0.7, 1.0, -2.0], vec![-1.0, 0.7, 0.5], vec![2.0, -0.5, 0.7]]).unwrap();
        let c = solve_lyapunov(&a).unwrap();
        let expected = SquareMatrix::identity(3).scale(1.0 / 1.4);
        assert!((&c - &expected).frobenius_norm() < 1e-12);
    }

    #[test]
    fn symmetric_positive_definite_gives_half_inverse() {
        let a = SquareMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let c = solve_lyapunov(&a).unwrap();
        let det = 2.0 - 0.25;
        let half_inv =
            SquareMatrix::from_rows(&[vec![1.0 / det, -0.5 / det], vec![-0.5 / det, 2.0 / det]]).unwrap().scale(0.5);
        assert!((&c - &half_inv).frobenius_norm() < 1e-14);
    }

    #[test]
    fn unstable_is_rejected() {
        let a = SquareMatrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        assert!(matches!(solve_lyapunov(&a), Err(OuError::Unstable { .. })));
        assert!(matches!(solve_lyapunov(&SquareMatrix::from_diag(&[1.0, -0.1])), Err(OuError::Unstable { .. })));
    }

    #[test]
    fn sign_iteration_agrees_with_kronecker() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let d = 9;
        let mut a = SquareMatrix::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let shift = -min_real_part(&a).unwrap() + 0.3;
        for i in 0..d {
            a[(i, i)] += shift;
        }
        let q = SquareMatrix::identity(d);
        let k = kronecker_solve(&a, &q).unwrap();
        let s = sign_function_solve(&a, &q).unwrap();
        assert!((&k - &s).frobenius_norm() < 1e-10 * k.frobenius_norm());
    }
}
