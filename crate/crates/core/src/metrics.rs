//! Gaze distributions and the cohesiveness metric.
//!
//! Cohesiveness is the mean squared Euclidean distance of a distribution's
//! points to their centroid, with population (divide by `N`) semantics. Lower
//! values mean the class is looking at the same place.

use crate::error::{GazeError, Result};
use crate::gaze::GazePoint;
use crate::scalar::Scalar;

/// Points that fell into one window `[window_start, window_end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeDistribution<T> {
    pub points: Vec<GazePoint<T>>,
    pub window_start: u64,
    pub window_end: u64,
}

impl<T: Scalar> GazeDistribution<T> {
    /// Builds a distribution, discarding nothing. Panics in debug builds if a
    /// point lies outside the window.
    pub fn new(points: Vec<GazePoint<T>>, window_start: u64, window_end: u64) -> Self {
        debug_assert!(points
            .iter()
            .all(|p| window_start <= p.t_ms && p.t_ms < window_end));
        Self {
            points,
            window_start,
            window_end,
        }
    }

    /// Wraps points that are not tied to a specific window (pooled fixtures,
    /// synthetic samples). The range is widened to cover every timestamp.
    pub fn pooled(points: Vec<GazePoint<T>>) -> Self {
        let start = points.iter().map(|p| p.t_ms).min().unwrap_or(0);
        let end = points.iter().map(|p| p.t_ms).max().map_or(0, |t| t + 1);
        Self::new(points, start, end)
    }

    /// Distribution of bare coordinates, all stamped at `t = 0`.
    pub fn from_coords(coords: &[[T; 2]]) -> Self {
        let points = coords
            .iter()
            .map(|&[x, y]| GazePoint::new(crate::StudentRef(0), 0, x, y))
            .collect();
        Self::pooled(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn coords(&self) -> Vec<[T; 2]> {
        self.points.iter().map(GazePoint::xy).collect()
    }

    pub fn centroid(&self) -> Result<Centroid<T>> {
        centroid(&self.coords())
    }

    pub fn cohesiveness(&self) -> Result<T> {
        cohesiveness(&self.coords())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centroid<T> {
    pub x: T,
    pub y: T,
}

pub fn centroid<T: Scalar>(points: &[[T; 2]]) -> Result<Centroid<T>> {
    if points.is_empty() {
        return Err(GazeError::EmptyInput);
    }
    // Accumulate offsets from the first point: a distribution of identical
    // points then has its centroid exactly on them.
    let n = T::from_count(points.len());
    let [ox, oy] = points[0];
    let (sx, sy) = points
        .iter()
        .fold((T::zero(), T::zero()), |(sx, sy), p| (sx + (p[0] - ox), sy + (p[1] - oy)));
    Ok(Centroid {
        x: ox + sx / n,
        y: oy + sy / n,
    })
}

pub fn cohesiveness<T: Scalar>(points: &[[T; 2]]) -> Result<T> {
    let c = centroid(points)?;
    let n = T::from_count(points.len());
    let total = points.iter().fold(T::zero(), |acc, p| {
        let dx = c.x - p[0];
        let dy = c.y - p[1];
        acc + dx * dx + dy * dy
    });
    Ok(total / n)
}

/// Mean squared distance to a fixed reference point instead of the centroid.
pub fn mean_squared_distance<T: Scalar>(points: &[[T; 2]], reference: [T; 2]) -> Result<T> {
    if points.is_empty() {
        return Err(GazeError::EmptyInput);
    }
    let total = points.iter().fold(T::zero(), |acc, p| {
        let dx = p[0] - reference[0];
        let dy = p[1] - reference[1];
        acc + dx * dx + dy * dy
    });
    Ok(total / T::from_count(points.len()))
}
