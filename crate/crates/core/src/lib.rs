//! Optimal feedback control of semilinear PDEs by dynamic programming on a
//! tree of controlled trajectories, accelerated with mode-wise (Tucker)
//! POD-DEIM model reduction and tree pruning.
//!
//! Layers, bottom up:
//!
//! * [`tensor`]: dense order-d tensors, unfoldings, mode products, truncated
//!   SVD and sequentially truncated HOSVD.
//! * [`dynamics`]: finite-difference operators, array-form semilinear models,
//!   semi-implicit Euler stepping with a tensor-structured shifted solve.
//! * [`reduction`]: HO-POD bases, HO-DEIM interpolation, reduced models,
//!   low-rank node storage and basis files.
//! * [`tree`]: tree construction, backward value recursion, optimal path
//!   extraction and the pruning rules.
//! * [`problems`]: the packaged benchmark problems.
//! * [`analysis`]: logarithmic norms, error-bound constants and the state and
//!   value bound checks.
//! * [`pipeline`]: offline/online drivers used by the command-line tool.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`.

// `!(x < y)` is used on purpose so that NaN takes the failing branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod pipeline;
pub mod problems;
pub mod reduction;
pub mod scalar;
pub mod tensor;
pub mod tree;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` dense tensor.
pub type Tensor = tensor::DenseTensor<f64>;
/// `f64` Tucker factors.
pub type Tucker = tensor::TuckerFactors<f64>;
/// `f64` dense matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
/// `f64` semilinear model.
pub type Model = dynamics::SemilinearModel<f64>;
/// `f64` HO-POD basis builder.
pub type PodBasis = reduction::HoPodBasis<f64>;
/// `f64` HO-DEIM interpolation data.
pub type Deim = reduction::HoDeim<f64>;
/// Error-bound constants (always `f64`).
pub type Budget = analysis::ErrorBudget;
/// `f64` benchmark problem.
pub type Problem = problems::ProblemSpec<f64>;
