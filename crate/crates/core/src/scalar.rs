//! Scalar abstraction shared by every numerical module.

use std::fmt;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable throughout the crate: `f32` or `f64`.
///
/// Transcendental functions come from [`RealField`]; conversions to and
/// from primitive types come from `num-traits`.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + fmt::LowerExp + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Converts an index or count.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the concrete type.
    fn epsilon() -> Self;
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
