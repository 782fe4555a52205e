//! Sparse drift estimation for multivariate Ornstein-Uhlenbeck processes.
//!
//! The library is generic over the floating point type through [`Scalar`]
//! (implemented for `f32` and `f64`); the aliases below fix `f64`, which is
//! what the command line tool and experiments use.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod estimators;
pub mod eval;
pub mod experiment;
pub mod finance;
pub mod linops;
pub mod model;
pub mod modelsel;
pub mod scalar;
pub mod seed;
pub mod sim;
pub mod stats;

pub use error::{OuError, Result};
pub use estimators::{
    adaptive_lasso, adaptive_weights, fit_penalized, fit_sigma_model, lasso, mle, soft_threshold, Estimate,
    SolverOptions,
};
pub use eval::{error_report, support_report, ErrorReport, SupportReport};
pub use experiment::{ExperimentConfig, ExperimentKind};
pub use linops::SquareMatrix;
pub use model::{DriftMatrix, SparsityPattern};
pub use modelsel::{cross_validate, CvResult, Method};
pub use scalar::Scalar;
pub use sim::Trajectory;
pub use stats::{LambdaConfig, SufficientStats};

pub type Matrix = SquareMatrix<f64>;
pub type Drift = DriftMatrix<f64>;
pub type Path = Trajectory<f64>;
pub type Stats = SufficientStats<f64>;
pub type Fit = Estimate<f64>;
pub type Options = SolverOptions<f64>;

pub type Matrix32 = SquareMatrix<f32>;
pub type Drift32 = DriftMatrix<f32>;
pub type Path32 = Trajectory<f32>;
pub type Stats32 = SufficientStats<f32>;
pub type Fit32 = Estimate<f32>;
