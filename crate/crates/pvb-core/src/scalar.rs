//! Scalar abstraction so the estimators work in either f32 or f64.
//!
//! Everything numerical in this crate is generic over [`Scalar`]. The crate
//! root exports f64 aliases for the common case; f32 runs the same code with
//! correspondingly looser accuracy.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by every estimator in this crate.
///
/// Implemented for `f32` and `f64` through the blanket impl; code elsewhere
/// only ever names this trait.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum<Self> + Display + Debug + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Sum<T> + Display + Debug + Send + Sync + 'static
{
}

/// Shorthand conversion from an f64 constant.
///
/// Panics only if the target type cannot represent ordinary finite values,
/// which no Float implementor of interest does.
#[inline]
pub(crate) fn s<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("finite f64 convertible to scalar")
}

/// Lossy view of a scalar as f64, used where algorithms work internally in
/// double precision (quantile inversion, RNG draws).
#[inline]
pub(crate) fn to_f64<S: Scalar>(x: S) -> f64 {
    x.to_f64().expect("scalar convertible to f64")
}
