//! Matrix exponential by scaling and squaring with a degree-13 Padé approximant.

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

use super::decomp::Lu;
use super::SquareMatrix;

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// 1-norm bound below which the unscaled [13/13] approximant is accurate to
/// double precision.
const THETA13: f64 = 5.371_920_351_148_152;

/// `exp(t A)`.
pub fn matrix_exponential<T: Scalar>(a: &SquareMatrix<T>, t: T) -> Result<SquareMatrix<T>> {
    if !a.is_finite() || !t.is_finite() {
        return invalid("matrix_exponential: non-finite input");
    }
    let d = a.dim();
    let at = a.scale(t);
    let norm = at.norm_one().as_f64();
    if norm == 0.0 {
        return Ok(SquareMatrix::identity(d));
    }
    let squarings = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let scaled = at.scale(T::of(2f64.powi(-squarings)));

    let b: Vec<T> = PADE13.iter().map(|&c| T::of(c)).collect();
    let ident = SquareMatrix::identity(d);
    let a2 = scaled.matmul(&scaled);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let lin = |c6: T, c4: T, c2: T, c0: T| -> SquareMatrix<T> {
        let mut m = a6.scale(c6);
        m += &a4.scale(c4);
        m += &a2.scale(c2);
        m += &ident.scale(c0);
        m
    };
    let u_inner = {
        let mut m = a6.matmul(&lin(b[13], b[11], b[9], T::zero()));
        m += &lin(b[7], b[5], b[3], b[1]);
        m
    };
    let u = scaled.matmul(&u_inner);
    let v = {
        let mut m = a6.matmul(&lin(b[12], b[10], b[8], T::zero()));
        m += &lin(b[6], b[4], b[2], b[0]);
        m
    };
    let p = &v + &u;
    let q = &v - &u;
    let mut r = Lu::new(&q)?.solve_mat(&p);
    for _ in 0..squarings {
        r = r.matmul(&r);
    }
    if !r.is_finite() {
        return invalid("matrix_exponential: result overflowed");
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_matrix_gives_identity() {
        let e = matrix_exponential(&SquareMatrix::<f64>::zeros(3), 1.0).unwrap();
        assert_eq!(e, SquareMatrix::identity(3));
    }

    #[test]
    fn diagonal_is_entrywise() {
        let a = SquareMatrix::from_diag(&[1.0, -2.0, 0.5, 10.0]);
        let e = matrix_exponential(&a, 1.5).unwrap();
        for (i, &v) in [1.0f64, -2.0, 0.5, 10.0].iter().enumerate() {
            assert_relative_eq!(e[(i, i)], (1.5 * v).exp(), max_relative = 1e-13);
        }
        assert_eq!(e.count_nonzero(0.0), 4);
    }

    #[test]
    fn nilpotent_truncates() {
        let a = SquareMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let e = matrix_exponential(&a, 1.0).unwrap();
        assert_eq!(e.as_slice(), &[1.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn rotation_generator() {
        let a = SquareMatrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let t: f64 = 40.0;
        let e = matrix_exponential(&a, t).unwrap();
        assert_relative_eq!(e[(0, 0)], t.cos(), epsilon = 1e-12);
        assert_relative_eq!(e[(1, 0)], t.sin(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matrix_exponential(&SquareMatrix::<f64>::identity(2), f64::NAN).is_err());
    }

    #[test]
    fn single_precision_instantiation() {
        let a = SquareMatrix::from_diag(&[1.0f32, -1.0]);
        let e = matrix_exponential(&a, 1.0f32).unwrap();
        assert!((e[(0, 0)] - std::f32::consts::E).abs() < 1e-5);
    }
}
