//! Scalar abstractions.
//!
//! Sparse storage and the partition-of-unity bookkeeping only need ring
//! arithmetic, so they are generic over [`Scalar`] and can be instantiated
//! with exact rationals. Everything that factorizes, iterates or takes
//! powers is generic over [`Real`] (`f32` or `f64`).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Ring-like element type usable in sparse storage.
pub trait Scalar: Num + Copy + Debug + Send + Sync + 'static {}

impl<S> Scalar for S where S: Num + Copy + Debug + Send + Sync + 'static {}

/// Floating point type used by every numerical kernel.
pub trait Real:
    Scalar
    + Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Display
    + FromStr
    + Default
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Euclidean norm.
pub fn norm2<T: Real>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum::<T>().sqrt()
}

pub fn norm_inf<T: Real>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
}

pub fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(&a, &b)| a * b).sum()
}

/// `y += a * x`
pub fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
