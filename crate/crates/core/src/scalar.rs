//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the gaze math is generic over.
///
/// Implemented for `f32` and `f64`. Coordinates, distances, cohesiveness and
/// scores all share one scalar so a pipeline can be instantiated at either
/// precision.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Every value used through this path is
    /// representable in `f32`, so the conversion never fails.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Neumaier-compensated sum. Used where results are compared bit-for-bit
/// across sequential and parallel evaluation.
pub fn stable_sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp = comp + ((sum - t) + v);
        } else {
            comp = comp + ((v - t) + sum);
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_sum_recovers_cancelled_terms() {
        let v = [1.0e16_f64, 1.0, -1.0e16];
        assert_eq!(stable_sum(v), 1.0);
        assert_eq!(v.iter().copied().sum::<f64>(), 0.0);
    }

    #[test]
    fn literal_conversion() {
        assert_eq!(f32::lit(0.5), 0.5_f32);
        assert_eq!(f64::from_count(31), 31.0);
    }
}
