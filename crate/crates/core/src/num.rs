//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Everything that does arithmetic is generic over [`Scalar`], which is
//! implemented for `f32` and `f64`. Default pipelines run in `f64`; the
//! type aliases at the crate root pin that choice.

use ndarray::NdFloat;
use num_traits::{FromPrimitive, ToPrimitive};
use std::iter::Sum;

pub trait Scalar: NdFloat + FromPrimitive + ToPrimitive + Default + Sum + Send + Sync + 'static {
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Pivot / comparison tolerance used by the exact solvers.
    fn solver_eps() -> Self;
}

impl Scalar for f32 {
    fn solver_eps() -> Self {
        1e-5
    }
}

impl Scalar for f64 {
    fn solver_eps() -> Self {
        1e-11
    }
}

/// `ln(2π)`.
pub(crate) fn ln_two_pi<T: Scalar>() -> T {
    T::lit((2.0 * std::f64::consts::PI).ln())
}

/// Numerically stable `log Σ exp(x_i)`.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let sum: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}
