use serde::{Deserialize, Serialize};

use crate::gaze::GazePoint;
use crate::scalar::Scalar;

pub const DEFAULT_HEATMAP_SIDE: usize = 32;

/// Point counts over a `rows x cols` grid covering the unit square, row-major
/// with row 0 at the top of the screen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub rows: usize,
    pub cols: usize,
    pub counts: Vec<u32>,
    pub window_start: u64,
    pub window_end: u64,
}

impl HeatmapGrid {
    pub fn new(rows: usize, cols: usize, window_start: u64, window_end: u64) -> Self {
        assert!(rows > 0 && cols > 0, "heatmap needs at least one cell");
        Self {
            rows,
            cols,
            counts: vec![0; rows * cols],
            window_start,
            window_end,
        }
    }

    pub fn cell_of<T: Scalar>(&self, x: T, y: T) -> (usize, usize) {
        let bin = |v: T, n: usize| {
            let scaled = (v * T::from_count(n)).floor().to_isize().unwrap_or(0);
            scaled.clamp(0, n as isize - 1) as usize
        };
        (bin(y, self.rows), bin(x, self.cols))
    }

    pub fn add<T: Scalar>(&mut self, x: T, y: T) {
        let (r, c) = self.cell_of(x, y);
        self.counts[r * self.cols + c] += 1;
    }

    pub fn from_points<T: Scalar>(
        points: &[GazePoint<T>],
        rows: usize,
        cols: usize,
        window_start: u64,
        window_end: u64,
    ) -> Self {
        let mut h = Self::new(rows, cols, window_start, window_end);
        for p in points {
            h.add(p.x, p.y);
        }
        h
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.counts[row * self.cols + col]
    }

    /// Cell with the highest count (first in row-major order on ties).
    pub fn peak(&self) -> Option<(usize, usize)> {
        let max = *self.counts.iter().max()?;
        if max == 0 {
            return None;
        }
        let i = self.counts.iter().position(|&c| c == max)?;
        Some((i / self.cols, i % self.cols))
    }

    /// Sum of counts within Chebyshev distance `radius` of a cell.
    pub fn mass_near(&self, row: usize, col: usize, radius: usize) -> u64 {
        let (r0, r1) = (row.saturating_sub(radius), (row + radius).min(self.rows - 1));
        let (c0, c1) = (col.saturating_sub(radius), (col + radius).min(self.cols - 1));
        (r0..=r1)
            .flat_map(|r| (c0..=c1).map(move |c| (r, c)))
            .map(|(r, c)| u64::from(self.get(r, c)))
            .sum()
    }
}
