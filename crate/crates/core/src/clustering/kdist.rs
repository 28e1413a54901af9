use rayon::prelude::*;

use super::grid::{distance, GridIndex};
use crate::error::{GazeError, Result};
use crate::scalar::Scalar;

/// Above this many points neighborhood searches go through a [`GridIndex`].
pub const GRID_THRESHOLD: usize = 2000;

/// Sorted distances from every point to its `k`-th nearest other point.
pub fn kdistance_curve<T: Scalar>(points: &[[T; 2]], k: usize) -> Result<Vec<T>> {
    let n = points.len();
    if k == 0 {
        return Err(GazeError::config("k", "must be positive"));
    }
    if n <= k {
        return Err(GazeError::InsufficientPoints { n, k });
    }
    let mut curve: Vec<T> = if n > GRID_THRESHOLD {
        // Cell sized so an average cell holds about k points.
        let (lo, hi) = bounds(points);
        let area = ((hi[0] - lo[0]) * (hi[1] - lo[1])).max(T::lit(1e-12));
        let cell = (area * T::from_count(k) / T::from_count(n)).sqrt();
        let grid = GridIndex::build(points, cell);
        (0..n)
            .into_par_iter()
            .map_init(Vec::new, |scratch, i| grid.kth_neighbor_distance(points, i, k, scratch))
            .collect()
    } else {
        (0..n)
            .into_par_iter()
            .map_init(Vec::new, |scratch: &mut Vec<T>, i| {
                scratch.clear();
                scratch.extend(
                    points
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, q)| distance(&points[i], q)),
                );
                *scratch
                    .select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap())
                    .1
            })
            .collect()
    };
    curve.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(curve)
}

fn bounds<T: Scalar>(points: &[[T; 2]]) -> ([T; 2], [T; 2]) {
    points.iter().fold(
        ([T::infinity(); 2], [T::neg_infinity(); 2]),
        |(lo, hi), p| {
            (
                [lo[0].min(p[0]), lo[1].min(p[1])],
                [hi[0].max(p[0]), hi[1].max(p[1])],
            )
        },
    )
}
