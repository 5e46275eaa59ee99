//! Pointwise nonlinear terms `F(D(Y), Y, u, t)`.

use std::fmt::Debug;

use crate::Scalar;

/// Values seen by a pointwise nonlinearity at one grid point.
#[derive(Clone, Copy, Debug)]
pub struct PointInput<'a, T> {
    /// State of every component at the point.
    pub state: &'a [T],
    /// `grad[c * d + k]` is `(Y_c ×_k B_k)` at the point; empty when the
    /// nonlinearity does not read derivatives.
    pub grad: &'a [T],
    /// Fixed auxiliary fields at the point (e.g. a control shape function).
    pub aux: &'a [T],
}

/// Nonlinear term evaluated entrywise.
///
/// Evaluation at a grid point may only read that point's state, derivative
/// and auxiliary values; this is what lets the interpolated (DEIM) reduced
/// model evaluate it on a few sampled entries.
pub trait Nonlinearity<T: Scalar>: Send + Sync + Debug {
    /// Number of coupled state components.
    fn components(&self) -> usize {
        1
    }

    /// Whether [`PointInput::grad`] is read.
    fn needs_gradient(&self) -> bool {
        false
    }

    /// Number of auxiliary fields expected in [`PointInput::aux`].
    fn aux_count(&self) -> usize {
        0
    }

    /// Value of component `comp` at one point.
    fn eval(&self, comp: usize, p: &PointInput<'_, T>, u: T, t: T) -> T;

    /// `Some(s)` when `F_c = s·Y_c` for every component, so reduced models
    /// can apply it exactly without interpolation.
    fn linear_factor(&self, _u: T, _t: T) -> Option<T> {
        None
    }

    /// Whether `F = u·Y` exactly, so the discrete dynamics only depends on
    /// the product of the factors `1 + Δt u` along a path.
    fn is_bilinear_control(&self) -> bool {
        false
    }

    /// Lipschitz constant of `y ↦ F(y, u, t)` over states with entries
    /// bounded by `radius` and controls in `controls`, when known in closed
    /// form.
    fn lipschitz(&self, _radius: T, _controls: &[T]) -> Option<T> {
        None
    }
}

/// `F ≡ 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoForcing;

impl<T: Scalar> Nonlinearity<T> for NoForcing {
    fn eval(&self, _comp: usize, _p: &PointInput<'_, T>, _u: T, _t: T) -> T {
        T::zero()
    }

    fn linear_factor(&self, _u: T, _t: T) -> Option<T> {
        Some(T::zero())
    }

    fn lipschitz(&self, _radius: T, _controls: &[T]) -> Option<T> {
        Some(T::zero())
    }
}

/// Multiplicative control `F_c = u·Y_c` on `components` fields.
#[derive(Clone, Copy, Debug)]
pub struct BilinearControl {
    pub components: usize,
}

impl Default for BilinearControl {
    fn default() -> Self {
        Self { components: 1 }
    }
}

impl<T: Scalar> Nonlinearity<T> for BilinearControl {
    fn components(&self) -> usize {
        self.components
    }

    fn eval(&self, comp: usize, p: &PointInput<'_, T>, u: T, _t: T) -> T {
        u * p.state[comp]
    }

    fn linear_factor(&self, u: T, _t: T) -> Option<T> {
        Some(u)
    }

    fn is_bilinear_control(&self) -> bool {
        true
    }

    fn lipschitz(&self, _radius: T, controls: &[T]) -> Option<T> {
        Some(controls.iter().fold(T::zero(), |acc, &u| if u.abs() > acc { u.abs() } else { acc }))
    }
}
