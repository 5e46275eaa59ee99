//! Array-form semilinear model `Ẏ = Σ_m Y ×_m A_m + F(D(Y), Y, u, t)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::fd::{assemble_fd_matrices, AdvectionScheme, Axis};
use super::nonlinear::{Nonlinearity, PointInput};
use crate::tensor::{kron_sum_matrix, DenseTensor};
use crate::{Error, Result, Scalar};

/// One tensor per state component.
pub type Fields<T> = Vec<DenseTensor<T>>;

/// Optional constants used by the error analysis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LipschitzConstants {
    /// Lipschitz constant of `y ↦ f(y, u, t)`.
    pub l_f: Option<f64>,
    pub l_running: Option<f64>,
    pub l_terminal: Option<f64>,
    pub bound_f: Option<f64>,
    pub bound_running: Option<f64>,
    pub bound_terminal: Option<f64>,
}

/// Semilinear system on a tensor grid. All components share the grid, the
/// per-mode operators and the control signal; the nonlinearity may couple
/// them.
#[derive(Clone, Debug)]
pub struct SemilinearModel<T: Scalar> {
    axes: Vec<Axis<T>>,
    a: Vec<DMatrix<T>>,
    b: Vec<DMatrix<T>>,
    nonlinear: Arc<dyn Nonlinearity<T>>,
    aux: Vec<DenseTensor<T>>,
    pub lipschitz: LipschitzConstants,
}

impl<T: Scalar> SemilinearModel<T> {
    pub fn new(
        axes: Vec<Axis<T>>,
        a: Vec<DMatrix<T>>,
        b: Vec<DMatrix<T>>,
        nonlinear: Arc<dyn Nonlinearity<T>>,
        aux: Vec<DenseTensor<T>>,
    ) -> Result<Self> {
        let d = axes.len();
        if d == 0 {
            return Err(Error::Argument("model needs at least one mode".into()));
        }
        if a.len() != d || b.len() != d {
            return Err(Error::mismatch("SemilinearModel", format!("{d} operators"), format!("{} / {}", a.len(), b.len())));
        }
        for (m, axis) in axes.iter().enumerate() {
            for (name, op) in [("A", &a[m]), ("B", &b[m])] {
                if op.nrows() != axis.n || op.ncols() != axis.n {
                    return Err(Error::mismatch(
                        "SemilinearModel",
                        format!("{name}_{m} of size {0}x{0}", axis.n),
                        format!("{}x{}", op.nrows(), op.ncols()),
                    ));
                }
            }
        }
        let dims: Vec<usize> = axes.iter().map(|x| x.n).collect();
        if aux.len() != nonlinear.aux_count() {
            return Err(Error::mismatch("SemilinearModel", format!("{} aux fields", nonlinear.aux_count()), aux.len()));
        }
        if let Some(bad) = aux.iter().find(|f| f.dims() != dims.as_slice()) {
            return Err(Error::mismatch("SemilinearModel", format!("aux dims {dims:?}"), format!("{:?}", bad.dims())));
        }
        Ok(Self {
            axes,
            a,
            b,
            nonlinear,
            aux,
            lipschitz: LipschitzConstants::default(),
        })
    }

    /// Assembles `A_m = σ·D2 − c_m·D1` and centered `B_m` on every axis.
    pub fn from_axes(
        axes: Vec<Axis<T>>,
        sigma: T,
        velocity: &[T],
        scheme: AdvectionScheme,
        nonlinear: Arc<dyn Nonlinearity<T>>,
        aux: Vec<DenseTensor<T>>,
    ) -> Result<Self> {
        if velocity.len() != axes.len() {
            return Err(Error::mismatch("from_axes", axes.len(), velocity.len()));
        }
        let (a, b) = axes
            .iter()
            .zip(velocity)
            .map(|(ax, &c)| assemble_fd_matrices(ax, sigma, c, scheme))
            .unzip();
        Self::new(axes, a, b, nonlinear, aux)
    }

    pub fn axes(&self) -> &[Axis<T>] {
        &self.axes
    }

    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(|x| x.n).collect()
    }

    pub fn order(&self) -> usize {
        self.axes.len()
    }

    pub fn components(&self) -> usize {
        self.nonlinear.components()
    }

    pub fn a_mats(&self) -> &[DMatrix<T>] {
        &self.a
    }

    pub fn b_mats(&self) -> &[DMatrix<T>] {
        &self.b
    }

    pub fn nonlinear(&self) -> &Arc<dyn Nonlinearity<T>> {
        &self.nonlinear
    }

    pub fn aux(&self) -> &[DenseTensor<T>] {
        &self.aux
    }

    /// `∏_m h_m`.
    pub fn cell_volume(&self) -> T {
        self.axes.iter().fold(T::one(), |acc, x| acc * x.h())
    }

    fn check(&self, y: &DenseTensor<T>, op: &'static str) -> Result<()> {
        let dims = self.dims();
        if y.dims() != dims.as_slice() {
            return Err(Error::mismatch(op, format!("{dims:?}"), format!("{:?}", y.dims())));
        }
        Ok(())
    }

    /// `Σ_m Y ×_m A_m`.
    pub fn apply_a(&self, y: &DenseTensor<T>) -> Result<DenseTensor<T>> {
        self.check(y, "apply_A")?;
        kron_sum_apply(&self.a, y)
    }

    /// `Σ_m Y ×_m B_m`.
    pub fn apply_d(&self, y: &DenseTensor<T>) -> Result<DenseTensor<T>> {
        self.check(y, "apply_D")?;
        kron_sum_apply(&self.b, y)
    }

    /// `[Y ×_1 B_1, …, Y ×_d B_d]`.
    pub fn gradients(&self, y: &DenseTensor<T>) -> Result<Vec<DenseTensor<T>>> {
        self.check(y, "gradients")?;
        self.b.iter().enumerate().map(|(m, b)| y.mode_product(b, m)).collect()
    }

    /// Dense Kronecker sum `L` of the `A_m`, refused above `cap` entries.
    pub fn dense_operator(&self, cap: usize) -> Result<DMatrix<T>> {
        kron_sum_matrix(&self.a, cap)
    }

    /// `F(D(Y), Y, u, t)` for every component.
    pub fn eval_nonlinear(&self, y: &[DenseTensor<T>], u: T, t: T) -> Result<Fields<T>> {
        let comps = self.components();
        if y.len() != comps {
            return Err(Error::mismatch("eval_nonlinear", format!("{comps} components"), y.len()));
        }
        for yc in y {
            self.check(yc, "eval_nonlinear")?;
        }
        let out = if let Some(s) = self.nonlinear.linear_factor(u, t) {
            y.iter().map(|yc| yc.scaled(s)).collect::<Fields<T>>()
        } else {
            let grads = if self.nonlinear.needs_gradient() {
                y.iter().map(|yc| self.gradients(yc)).collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            let grad_refs: Vec<&[T]> = grads.iter().flatten().map(|g| g.as_slice()).collect();
            let state_refs: Vec<&[T]> = y.iter().map(|t| t.as_slice()).collect();
            let aux_refs: Vec<&[T]> = self.aux.iter().map(|t| t.as_slice()).collect();
            let dims = self.dims();
            let mut out: Fields<T> = (0..comps).map(|_| DenseTensor::zeros(&dims)).collect();
            for (c, o) in out.iter_mut().enumerate() {
                eval_pointwise_component(self.nonlinear.as_ref(), c, &state_refs, &grad_refs, &aux_refs, u, t, o);
            }
            out
        };
        if out.iter().any(|f| !f.is_finite()) {
            return Err(Error::Numerical(format!("nonlinear term is not finite at t = {t}, u = {u}")));
        }
        Ok(out)
    }
}

/// `Σ_m Y ×_m M_m`.
pub fn kron_sum_apply<T: Scalar>(mats: &[DMatrix<T>], y: &DenseTensor<T>) -> Result<DenseTensor<T>> {
    if mats.len() != y.order() {
        return Err(Error::mismatch("kron_sum_apply", y.order(), mats.len()));
    }
    let mut acc = DenseTensor::zeros(y.dims());
    for (m, a) in mats.iter().enumerate() {
        acc.axpy(T::one(), &y.mode_product(a, m)?)?;
    }
    Ok(acc)
}

/// Evaluates component `comp` of `f` at every entry of `out`. `grads` holds
/// `Y_c ×_k B_k` at position `c·d + k` (or is empty); every slice has the
/// length of `out`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn eval_pointwise_component<T: Scalar>(
    f: &dyn Nonlinearity<T>,
    comp: usize,
    states: &[&[T]],
    grads: &[&[T]],
    aux: &[&[T]],
    u: T,
    t: T,
    out: &mut DenseTensor<T>,
) {
    let mut sbuf = vec![T::zero(); states.len()];
    let mut gbuf = vec![T::zero(); grads.len()];
    let mut abuf = vec![T::zero(); aux.len()];
    for (i, o) in out.as_mut_slice().iter_mut().enumerate() {
        for (b, s) in sbuf.iter_mut().zip(states) {
            *b = s[i];
        }
        for (b, g) in gbuf.iter_mut().zip(grads) {
            *b = g[i];
        }
        for (b, a) in abuf.iter_mut().zip(aux) {
            *b = a[i];
        }
        let p = PointInput {
            state: &sbuf,
            grad: &gbuf,
            aux: &abuf,
        };
        *o = f.eval(comp, &p, u, t);
    }
}
