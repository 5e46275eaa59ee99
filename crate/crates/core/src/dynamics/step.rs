//! Semi-implicit Euler: `(I − Δt·L) y^{k+1} = y^k + Δt·f(y^k, u^k, t_k)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::{Fields, SemilinearModel};
use super::solver::ShiftedSolver;
use crate::linalg::lu_solve;
use crate::tensor::DenseTensor;
use crate::{Error, Result, Scalar};

/// Uniform time grid on `[t0, t_final]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub t0: f64,
    pub t_final: f64,
    pub dt: f64,
}

impl IntegratorConfig {
    pub fn new(t0: f64, t_final: f64, dt: f64) -> Result<Self> {
        let cfg = Self { t0, t_final, dt };
        cfg.steps()?;
        Ok(cfg)
    }

    /// `N_t = (T − t0)/Δt`, which must be an integer within `1e-9`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.t_final > self.t0) {
            return Err(Error::Config(format!("empty horizon [{}, {}]", self.t0, self.t_final)));
        }
        let ratio = (self.t_final - self.t0) / self.dt;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 || n < 1.0 {
            return Err(Error::Config(format!(
                "horizon {} is not a multiple of dt = {} (ratio {ratio})",
                self.t_final - self.t0,
                self.dt
            )));
        }
        Ok(n as usize)
    }

    /// `t_k = t0 + k·Δt`.
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }
}

/// Full-order stepper with the shifted operator factored once.
#[derive(Clone, Debug)]
pub struct FullOrderStepper<T: Scalar> {
    model: SemilinearModel<T>,
    solver: ShiftedSolver<T>,
}

impl<T: Scalar> FullOrderStepper<T> {
    pub fn new(model: SemilinearModel<T>, dt: T) -> Result<Self> {
        let solver = ShiftedSolver::new(model.a_mats(), dt)?;
        Ok(Self { model, solver })
    }

    pub fn model(&self) -> &SemilinearModel<T> {
        &self.model
    }

    pub fn dt(&self) -> T {
        self.solver.dt()
    }

    pub fn solver(&self) -> &ShiftedSolver<T> {
        &self.solver
    }

    pub fn step(&self, y: &[DenseTensor<T>], u: T, t: T) -> Result<Fields<T>> {
        let f = self.model.eval_nonlinear(y, u, t)?;
        let dt = self.solver.dt();
        y.iter()
            .zip(&f)
            .map(|(yc, fc)| {
                let mut rhs = yc.clone();
                rhs.axpy(dt, fc)?;
                finite(self.solver.solve(&rhs)?)
            })
            .collect()
    }

    /// States `y^0..y^n` under `controls[k]` at `t0 + kΔt`.
    pub fn trajectory(&self, y0: &[DenseTensor<T>], controls: &[T], t0: T) -> Result<Vec<Fields<T>>> {
        let mut out = Vec::with_capacity(controls.len() + 1);
        out.push(y0.to_vec());
        for (k, &u) in controls.iter().enumerate() {
            let t = t0 + self.dt() * T::from_count(k);
            let next = self.step(out.last().expect("nonempty"), u, t)?;
            out.push(next);
        }
        Ok(out)
    }
}

pub(crate) fn finite<T: Scalar>(y: DenseTensor<T>) -> Result<DenseTensor<T>> {
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::Numerical("state is no longer finite".into()))
    }
}

/// One semi-implicit step of `model`; factors the operator on every call.
pub fn step_semi_implicit<T: Scalar>(model: &SemilinearModel<T>, y: &[DenseTensor<T>], u: T, t: T, dt: T) -> Result<Fields<T>> {
    FullOrderStepper::new(model.clone(), dt)?.step(y, u, t)
}

/// Dense reference: solves `(I − Δt·L) y = y_prev + Δt·f(y_prev, u, t)` by LU.
pub fn vectorized_reference_step<T: Scalar>(
    l: &DMatrix<T>,
    f: impl Fn(&DVector<T>, T, T) -> DVector<T>,
    y_prev: &DVector<T>,
    u: T,
    t: T,
    dt: T,
    cap: usize,
) -> Result<DVector<T>> {
    let n = y_prev.len();
    if l.nrows() != n || l.ncols() != n {
        return Err(Error::mismatch("vectorized_reference_step", format!("{n}x{n}"), format!("{}x{}", l.nrows(), l.ncols())));
    }
    if n.saturating_mul(n) > cap {
        return Err(Error::OracleCap { size: n.saturating_mul(n), cap });
    }
    let rhs = y_prev + f(y_prev, u, t) * dt;
    let system = DMatrix::identity(n, n) - l * dt;
    lu_solve(&system, &rhs)
}

/// Bilinear `ẏ = Ly + uy` after `controls.len()` semi-implicit steps:
/// `(I − ΔtL)^{-n} y0 · ∏_k (1 + Δt·u^k)`.
pub fn bilinear_closed_form<T: Scalar>(solver: &ShiftedSolver<T>, y0: &DenseTensor<T>, controls: &[T]) -> Result<DenseTensor<T>> {
    let dt = solver.dt();
    let mut y = y0.clone();
    for _ in controls {
        y = solver.solve(&y)?;
    }
    let factor = controls.iter().fold(T::one(), |acc, &u| acc * (T::one() + dt * u));
    y.scale(factor);
    Ok(y)
}
