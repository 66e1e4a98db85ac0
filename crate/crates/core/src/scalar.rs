//! Scalar abstraction for the analysis math.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar all analysis math is generic over.
///
/// Implemented for `f32` and `f64`; the crate-root aliases pin the
/// standard pipeline to `f64`.
pub trait Scalar:
    Float + FromPrimitive + Sum<Self> + Debug + Display + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + Sum<T> + Debug + Display + Send + Sync + 'static
{
}

/// Shorthand for the ubiquitous `f64 -> F` conversion.
#[inline]
pub fn cast<F: Scalar>(v: f64) -> F {
    F::from_f64(v).expect("f64 -> scalar conversion")
}

/// Lossless-enough `usize -> F` conversion for counts.
#[inline]
pub fn cast_usize<F: Scalar>(v: usize) -> F {
    F::from_usize(v).expect("usize -> scalar conversion")
}
