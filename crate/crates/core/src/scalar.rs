//! Scalar abstraction shared by the numeric modules.
//!
//! Floating-point kernels are generic over [`Scalar`] (`f32` or `f64`). The
//! zone and selective-accuracy routines only need ordered field arithmetic and
//! accept any [`ExactField`], which lets tests run them over rationals.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, NumAssign, ToPrimitive};

/// Floating-point scalar used by the statistical and factorization kernels.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; constants in the kernels go through here.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize is representable in every Scalar")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
}

/// Ordered field arithmetic without transcendental functions.
pub trait ExactField: Num + Copy + PartialOrd + FromPrimitive + Debug {}

impl<T> ExactField for T where T: Num + Copy + PartialOrd + FromPrimitive + Debug {}

pub(crate) fn field_of_usize<T: ExactField>(v: usize) -> T {
    T::from_usize(v).expect("count representable in field")
}
