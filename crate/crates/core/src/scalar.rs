//! Scalar abstractions shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar used for latencies, probabilities and Monte Carlo
/// estimates. Implemented for `f32` and `f64`.
///
/// Special functions (log-gamma, digamma, incomplete gamma, erf) are
/// evaluated in `f64` and converted back; see [`Real::via_f64`].
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal fits scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Apply an `f64` function to this scalar.
    fn via_f64(self, f: impl FnOnce(f64) -> f64) -> Self {
        Self::lit(f(self.as_f64()))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Scalar for the plan cost model. Anything with field arithmetic and an
/// ordering works, including exact rationals.
pub trait CostScalar: Clone + Num + PartialOrd + FromPrimitive + Debug {
    /// `num / den` built from small integers, so that rational scalars get
    /// the exact decimal value instead of a binary approximation.
    fn ratio(num: u32, den: u32) -> Self {
        let n = Self::from_u32(num).expect("integer fits scalar");
        let d = Self::from_u32(den).expect("integer fits scalar");
        n / d
    }
}

impl<T: Clone + Num + PartialOrd + FromPrimitive + Debug> CostScalar for T {}
