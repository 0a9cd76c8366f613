//! Scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::float::FloatConst;
use num_traits::{Float, FromPrimitive};

/// Floating point scalar the model core is generic over.
///
/// `f32` and `f64` both qualify; the crate-root aliases fix `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant, panicking only on NaN-free overflow
    /// which cannot happen for the literals used in this crate.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in target float")
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
