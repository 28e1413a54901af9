//! Gaze samples and the admission rule applied to raw client estimates.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Opaque per-session handle for an anonymous student.
///
/// The server hands clients a random token and maps it to this slot; only the
/// slot travels with gaze points and it never leaves the ingestion path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StudentRef(pub u32);

/// One normalized gaze estimate. Coordinates are screen fractions in `[0, 1]`
/// once admitted; `t_ms` is milliseconds since session start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazePoint<T> {
    pub student: StudentRef,
    pub t_ms: u64,
    pub x: T,
    pub y: T,
}

impl<T: Scalar> GazePoint<T> {
    pub fn new(student: StudentRef, t_ms: u64, x: T, y: T) -> Self {
        Self { student, t_ms, x, y }
    }

    #[inline]
    pub fn xy(&self) -> [T; 2] {
        [self.x, self.y]
    }
}

/// Raw estimates further than this outside the unit square are off-screen.
pub const ADMIT_LOW: f64 = -0.1;
pub const ADMIT_HIGH: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    NonFinite,
    OffScreen,
}

/// Outcome of running one raw `(x, y)` estimate through admission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Admission<T> {
    Accepted { x: T, y: T, clamped: bool },
    Dropped(DropReason),
}

/// Drops non-finite or off-screen estimates and clamps small overshoot into
/// the unit square.
pub fn admit<T: Scalar>(x: T, y: T) -> Admission<T> {
    if !x.is_finite() || !y.is_finite() {
        return Admission::Dropped(DropReason::NonFinite);
    }
    let (lo, hi) = (T::lit(ADMIT_LOW), T::lit(ADMIT_HIGH));
    if x < lo || x > hi || y < lo || y > hi {
        return Admission::Dropped(DropReason::OffScreen);
    }
    let cx = x.max(T::zero()).min(T::one());
    let cy = y.max(T::zero()).min(T::one());
    Admission::Accepted {
        x: cx,
        y: cy,
        clamped: cx != x || cy != y,
    }
}
