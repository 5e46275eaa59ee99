//! Scalar bound shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
///
/// Linear algebra goes through nalgebra's [`RealField`]; conversions to and
/// from literals and reporting go through num-traits.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal is representable")
    }

    /// Conversion from a count.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }

    /// Machine epsilon of the concrete type.
    fn epsilon() -> Self;

    #[inline]
    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Scalar for f32 {
    fn epsilon() -> Self {
        f32::EPSILON
    }
}

impl Scalar for f64 {
    fn epsilon() -> Self {
        f64::EPSILON
    }
}
