//! Dense linear algebra: matrix type, factorisations, spectra, matrix
//! exponential and Lyapunov solves.

mod decomp;
mod eigen;
mod expm;
mod lyapunov;
mod matrix;

pub use decomp::{cholesky, cholesky_jittered, symmetric_eigen, symmetric_eigenvalues, Lu};
pub use eigen::{eigenvalues, min_real_part, min_symmetric_eigenvalue, operator_norm, spectral_info, SpectralInfo};
pub use expm::matrix_exponential;
pub use lyapunov::{
    kronecker_solve, lyapunov_residual, sign_function_solve, solve_lyapunov, solve_lyapunov_with_rhs, KRONECKER_MAX_DIM,
};
pub use matrix::SquareMatrix;
