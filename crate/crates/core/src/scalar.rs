//! Scalar abstraction shared by the numeric kernels.
//!
//! Influence-function evaluation, summation, the normal quantile and the dense
//! solvers are written against [`Scalar`] so they can run in `f32` or `f64`.
//! Data containers and the simulation pipeline are fixed to [`crate::Real`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// floating point: f32 or f64
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless-enough conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    /// Conversion of a count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Logistic function `1 / (1 + exp(-z))`, evaluated without overflow.
#[inline]
pub fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let ez = z.exp();
        ez / (F::one() + ez)
    }
}

/// Inverse of [`sigmoid`].
#[inline]
pub fn logit<F: Scalar>(p: F) -> F {
    (p / (F::one() - p)).ln()
}
