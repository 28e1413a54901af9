//! Knee location on a sorted, increasing, convex curve.
//!
//! Both axes are min-max normalized to `[0, 1]`; the knee is the index that
//! maximizes `x_n - y_n`, i.e. the point farthest below the chord joining the
//! curve's endpoints. Ties resolve to the smallest index.

use crate::error::{GazeError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Elbow<T> {
    pub index: usize,
    pub value: T,
}

pub fn find_elbow<T: Scalar>(curve: &[T]) -> Result<Elbow<T>> {
    let n = curve.len();
    if n < 3 {
        return Err(GazeError::CurveTooShort(n));
    }
    let (lo, hi) = curve
        .iter()
        .fold((curve[0], curve[0]), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if !(span > T::zero()) {
        return Err(GazeError::DegenerateCurve);
    }
    let last = T::from_count(n - 1);
    let mut best = Elbow {
        index: 0,
        value: curve[0],
    };
    let mut best_gap = T::neg_infinity();
    for (i, &v) in curve.iter().enumerate() {
        let gap = T::from_count(i) / last - (v - lo) / span;
        if gap > best_gap {
            best_gap = gap;
            best = Elbow { index: i, value: v };
        }
    }
    Ok(best)
}

/// Nearest-rank percentile of an ascending curve, `q` in `(0, 1]`.
pub fn percentile<T: Scalar>(sorted: &[T], q: f64) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}
