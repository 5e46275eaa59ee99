//! Finite-difference semilinear models and their time stepping.

pub mod fd;
pub mod model;
pub mod nonlinear;
pub mod solver;
pub mod step;

pub use fd::{assemble_fd_matrices, AdvectionScheme, Axis, Boundary};
pub use model::{kron_sum_apply, Fields, LipschitzConstants, SemilinearModel};
pub use nonlinear::{BilinearControl, NoForcing, Nonlinearity, PointInput};
pub use solver::ShiftedSolver;
pub use step::{bilinear_closed_form, step_semi_implicit, vectorized_reference_step, FullOrderStepper, IntegratorConfig};
