//! Scalar abstraction shared by the numerical kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the grids, fields and value functions are generic over.
///
/// Implemented for `f32` and `f64`. Geometry decisions that must not depend on
/// the working precision (stencil membership, slice counts) are taken in `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Copy + Default + Send + Sync + Debug + Display + Sum + 'static
{
    /// Converts an `f64` literal into the working precision.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in the working precision")
    }

    #[inline]
    fn from_count(v: usize) -> Self {
        Self::from_usize(v).expect("count representable in the working precision")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Euclidean norm of a vector.
pub fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&c| c * c).sum::<T>().sqrt()
}

/// Euclidean distance between two points of equal dimension.
pub fn distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}
