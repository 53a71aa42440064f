//! Scalar abstractions.
//!
//! The finite-MDP and channel algebra is written against [`Scalar`] so it runs
//! on `f32` and `f64` alike. Exhaustive expectations that must be exact (the
//! correlated-agreement toy identities) are written against [`Field`], which
//! rational types such as `num_rational::Ratio<i64>` satisfy.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, NumAssign, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal, panicking only if the value is unrepresentable.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Tolerance used when checking that probability rows sum to one.
    fn stochastic_tol() -> Self {
        let eps = Self::epsilon() * Self::lit(64.0);
        eps.max(Self::lit(1e-12))
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Exact (or approximate) field used for exhaustive expectations.
pub trait Field: Num + Clone + PartialOrd + Debug {}

impl<T: Num + Clone + PartialOrd + Debug> Field for T {}
