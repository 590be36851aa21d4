use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Numeric type the physics and settlement code is written against.
///
/// Implemented for `f32`, `f64` and the `num-rational` ratio types.
pub trait Scalar:
    Num + Signed + PartialOrd + Copy + FromPrimitive + ToPrimitive + Sum + Debug
{
    /// Converts a finite `f64` parameter into this scalar.
    ///
    /// Rational scalars use the closest small-denominator approximation, so
    /// decimal literals like `0.7` become exactly `7/10`.
    fn from_real(value: f64) -> Self {
        Self::from_f64(value)
            .unwrap_or_else(|| panic!("{value} is not representable in the scalar type"))
    }

    fn to_real(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl<T> Scalar for T where
    T: Num + Signed + PartialOrd + Copy + FromPrimitive + ToPrimitive + Sum + Debug
{
}
