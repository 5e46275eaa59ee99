//! One-dimensional finite-difference stencils on uniform grids.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Homogeneous boundary condition of one mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Zero values on the boundary; unknowns are the `n` interior points.
    Dirichlet,
    /// Zero normal derivative; unknowns include both end points and ghost
    /// values are mirrored.
    Neumann,
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet" => Ok(Boundary::Dirichlet),
            "neumann" => Ok(Boundary::Neumann),
            other => Err(Error::Argument(format!("unsupported boundary condition `{other}`"))),
        }
    }
}

/// Stencil for the advection term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AdvectionScheme {
    /// First-order one-sided difference against the flow direction.
    #[default]
    Upwind,
    Centered,
}

/// Uniform grid along one mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis<T> {
    pub lower: T,
    pub upper: T,
    pub n: usize,
    pub bc: Boundary,
}

impl<T: Scalar> Axis<T> {
    pub fn new(lower: T, upper: T, n: usize, bc: Boundary) -> Result<Self> {
        if n < 3 {
            return Err(Error::Argument(format!("need at least 3 grid points, got {n}")));
        }
        if upper <= lower {
            return Err(Error::Argument("empty interval".into()));
        }
        Ok(Self { lower, upper, n, bc })
    }

    /// Mesh width.
    pub fn h(&self) -> T {
        let len = self.upper - self.lower;
        match self.bc {
            Boundary::Dirichlet => len / T::from_count(self.n + 1),
            Boundary::Neumann => len / T::from_count(self.n - 1),
        }
    }

    /// Coordinates of the unknowns.
    pub fn points(&self) -> Vec<T> {
        let h = self.h();
        let shift = match self.bc {
            Boundary::Dirichlet => 1,
            Boundary::Neumann => 0,
        };
        (0..self.n).map(|i| self.lower + h * T::from_count(i + shift)).collect()
    }
}

/// `D2` with `D2·y ≈ y''`.
pub fn second_difference<T: Scalar>(axis: &Axis<T>) -> DMatrix<T> {
    let n = axis.n;
    let h2 = axis.h() * axis.h();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = -T::lit(2.0) / h2;
        if i > 0 {
            d[(i, i - 1)] = T::one() / h2;
        }
        if i + 1 < n {
            d[(i, i + 1)] = T::one() / h2;
        }
    }
    if axis.bc == Boundary::Neumann {
        d[(0, 1)] = T::lit(2.0) / h2;
        d[(n - 1, n - 2)] = T::lit(2.0) / h2;
    }
    d
}

/// Centered first difference `(y_{i+1} − y_{i−1}) / 2h`.
pub fn centered_difference<T: Scalar>(axis: &Axis<T>) -> DMatrix<T> {
    let n = axis.n;
    let c = T::one() / (T::lit(2.0) * axis.h());
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        if i > 0 {
            d[(i, i - 1)] = -c;
        }
        if i + 1 < n {
            d[(i, i + 1)] = c;
        }
    }
    if axis.bc == Boundary::Neumann {
        // mirrored ghosts cancel the end rows
        d[(0, 1)] = T::zero();
        d[(n - 1, n - 2)] = T::zero();
    }
    d
}

/// One-sided first difference taken against the velocity sign.
pub fn upwind_difference<T: Scalar>(axis: &Axis<T>, velocity: T) -> DMatrix<T> {
    let n = axis.n;
    let c = T::one() / axis.h();
    let mut d = DMatrix::zeros(n, n);
    let neumann = axis.bc == Boundary::Neumann;
    for i in 0..n {
        d[(i, i)] = if velocity >= T::zero() { c } else { -c };
        if velocity >= T::zero() {
            // (y_i − y_{i−1}) / h, ghost y_{−1} = y_1
            if i > 0 {
                d[(i, i - 1)] = -c;
            } else if neumann {
                d[(0, 1)] = -c;
            }
        } else if i + 1 < n {
            // (y_{i+1} − y_i) / h, ghost y_n = y_{n−2}
            d[(i, i + 1)] = c;
        } else if neumann {
            d[(n - 1, n - 2)] = c;
        }
    }
    d
}

/// Per-mode operators `(A, B)`: `A = σ·D2 − c·D1` with `D1` chosen by
/// `scheme`, and `B` the centered first difference.
pub fn assemble_fd_matrices<T: Scalar>(
    axis: &Axis<T>,
    sigma: T,
    velocity: T,
    scheme: AdvectionScheme,
) -> (DMatrix<T>, DMatrix<T>) {
    let mut a = second_difference(axis) * sigma;
    if velocity != T::zero() {
        let d1 = match scheme {
            AdvectionScheme::Upwind => upwind_difference(axis, velocity),
            AdvectionScheme::Centered => centered_difference(axis),
        };
        a -= d1 * velocity;
    }
    (a, centered_difference(axis))
}
