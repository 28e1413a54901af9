//! Sliding windows over a gaze stream.
//!
//! Window `k` covers `[k * stride, k * stride + len)`. With `stride < len`
//! windows overlap and a point lands in every window whose range contains it.

use serde::{Deserialize, Serialize};

use crate::error::{GazeError, Result};
use crate::gaze::GazePoint;
use crate::metrics::GazeDistribution;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub window_len_ms: u64,
    pub stride_ms: u64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_len_ms: 10_000,
            stride_ms: 2_000,
        }
    }
}

impl WindowConfig {
    pub fn new(window_len_ms: u64, stride_ms: u64) -> Result<Self> {
        let cfg = Self {
            window_len_ms,
            stride_ms,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len_ms == 0 {
            return Err(GazeError::config("window_len_ms", "must be positive"));
        }
        if self.stride_ms == 0 {
            return Err(GazeError::config("stride_ms", "must be positive"));
        }
        if self.stride_ms > self.window_len_ms {
            return Err(GazeError::config(
                "stride_ms",
                format!(
                    "stride {} exceeds window length {}; windows would skip data",
                    self.stride_ms, self.window_len_ms
                ),
            ));
        }
        Ok(())
    }

    pub fn start(&self, k: u64) -> u64 {
        k * self.stride_ms
    }

    pub fn end(&self, k: u64) -> u64 {
        k * self.stride_ms + self.window_len_ms
    }

    /// Index of the earliest window containing `t`.
    pub fn first_window_containing(&self, t: u64) -> u64 {
        if t < self.window_len_ms {
            0
        } else {
            (t - self.window_len_ms) / self.stride_ms + 1
        }
    }

    /// Index of the latest window containing `t`.
    pub fn last_window_containing(&self, t: u64) -> u64 {
        t / self.stride_ms
    }
}

/// Single-writer window state for one stream.
///
/// Points are buffered until every window that can contain them has closed.
/// A point older than the start of the oldest open window is late: it is
/// counted and discarded.
#[derive(Debug, Clone)]
pub struct WindowAccumulator<T> {
    cfg: WindowConfig,
    next: Option<u64>,
    buffer: Vec<GazePoint<T>>,
    dropped_late: u64,
}

impl<T: Scalar> WindowAccumulator<T> {
    /// Accumulator whose first window is the earliest one containing the
    /// first pushed point.
    pub fn new(cfg: WindowConfig) -> Self {
        Self {
            cfg,
            next: None,
            buffer: Vec::new(),
            dropped_late: 0,
        }
    }

    /// Accumulator whose first window starts at `t = 0`, so every stride
    /// produces a window even while no points arrive.
    pub fn anchored(cfg: WindowConfig) -> Self {
        Self {
            next: Some(0),
            ..Self::new(cfg)
        }
    }

    pub fn config(&self) -> WindowConfig {
        self.cfg
    }

    pub fn dropped_late(&self) -> u64 {
        self.dropped_late
    }

    /// Index of the oldest window still open, if any window has started.
    pub fn next_window(&self) -> Option<u64> {
        self.next
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Adds a point. Returns `false` if it was late and discarded.
    pub fn push(&mut self, p: GazePoint<T>) -> bool {
        let next = *self
            .next
            .get_or_insert_with(|| self.cfg.first_window_containing(p.t_ms));
        if p.t_ms < self.cfg.start(next) {
            self.dropped_late += 1;
            return false;
        }
        self.buffer.push(p);
        true
    }

    /// Closes every open window that ends at or before `watermark` and
    /// returns them oldest first.
    pub fn close_until(&mut self, watermark: u64) -> Vec<GazeDistribution<T>> {
        let mut out = Vec::new();
        while let Some(k) = self.next {
            if self.cfg.end(k) > watermark {
                break;
            }
            out.push(self.take_window(k));
        }
        out
    }

    /// Closes windows up to and including the last one holding a buffered
    /// point. Used at end of stream.
    pub fn flush(&mut self) -> Vec<GazeDistribution<T>> {
        let Some(max_t) = self.buffer.iter().map(|p| p.t_ms).max() else {
            return Vec::new();
        };
        let last = self.cfg.last_window_containing(max_t);
        let mut out = Vec::new();
        while let Some(k) = self.next {
            if k > last {
                break;
            }
            out.push(self.take_window(k));
        }
        out
    }

    fn take_window(&mut self, k: u64) -> GazeDistribution<T> {
        let (start, end) = (self.cfg.start(k), self.cfg.end(k));
        let points: Vec<_> = self
            .buffer
            .iter()
            .filter(|p| start <= p.t_ms && p.t_ms < end)
            .copied()
            .collect();
        let next_start = self.cfg.start(k + 1);
        self.buffer.retain(|p| p.t_ms >= next_start);
        self.next = Some(k + 1);
        GazeDistribution::new(points, start, end)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamStats {
    pub admitted: u64,
    pub dropped_late: u64,
}

/// Windows an entire stream. Windows close when a point at or past their end
/// arrives; whatever is open at the end of the stream is flushed.
pub fn window_stream<T, I>(points: I, cfg: WindowConfig) -> (Vec<GazeDistribution<T>>, StreamStats)
where
    T: Scalar,
    I: IntoIterator<Item = GazePoint<T>>,
{
    let mut acc = WindowAccumulator::new(cfg);
    let mut out = Vec::new();
    let mut admitted = 0;
    for p in points {
        out.extend(acc.close_until(p.t_ms));
        if acc.push(p) {
            admitted += 1;
        }
    }
    out.extend(acc.flush());
    let stats = StreamStats {
        admitted,
        dropped_late: acc.dropped_late(),
    };
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaze::StudentRef;
    use proptest::prelude::*;

    fn pt(t: u64) -> GazePoint<f64> {
        GazePoint::new(StudentRef(0), t, 0.5, 0.5)
    }

    #[test]
    fn config_validation() {
        assert!(WindowConfig::new(10_000, 2_000).is_ok());
        assert!(WindowConfig::new(10_000, 10_000).is_ok());
        let err = WindowConfig::new(1_000, 2_000).unwrap_err();
        assert!(matches!(err, GazeError::InvalidConfig { field: "stride_ms", .. }));
        assert!(WindowConfig::new(0, 0).is_err());
    }

    #[test]
    fn tiling_windows_are_disjoint() {
        let cfg = WindowConfig::new(10_000, 10_000).unwrap();
        let pts = (0..20_000).step_by(100).map(pt);
        let (w, stats) = window_stream(pts, cfg);
        assert_eq!(w.len(), 2);
        assert_eq!((w[0].window_start, w[0].window_end), (0, 10_000));
        assert_eq!((w[1].window_start, w[1].window_end), (10_000, 20_000));
        assert_eq!(w[0].len() + w[1].len(), 200);
        assert!(w[0].points.iter().all(|p| p.t_ms < 10_000));
        assert!(w[1].points.iter().all(|p| p.t_ms >= 10_000));
        assert_eq!(stats.dropped_late, 0);
    }

    #[test]
    fn overlapping_windows_share_a_point() {
        let cfg = WindowConfig::new(10_000, 2_000).unwrap();
        // Oracle: enumerate k with k*2000 <= 5000 < k*2000 + 10000.
        let expected: Vec<u64> = (0..10)
            .map(|k| k * 2_000)
            .filter(|&s| s <= 5_000 && 5_000 < s + 10_000)
            .collect();
        assert_eq!(expected, vec![0, 2_000, 4_000]);
        let (w, _) = window_stream([pt(5_000)], cfg);
        let starts: Vec<u64> = w.iter().map(|d| d.window_start).collect();
        assert_eq!(starts, expected);
        assert!(w.iter().all(|d| d.len() == 1));
    }

    #[test]
    fn empty_stream() {
        let (w, stats) = window_stream(Vec::<GazePoint<f64>>::new(), WindowConfig::default());
        assert!(w.is_empty());
        assert_eq!(stats, StreamStats::default());
    }

    #[test]
    fn late_points_are_counted_and_dropped() {
        let cfg = WindowConfig::new(10_000, 2_000).unwrap();
        let (w, stats) = window_stream([pt(30_000), pt(12_000), pt(25_000)], cfg);
        assert_eq!(stats.dropped_late, 1);
        assert_eq!(stats.admitted, 2);
        assert!(w.iter().all(|d| d.points.iter().all(|p| p.t_ms != 12_000)));
    }

    #[test]
    fn anchored_accumulator_emits_empty_windows() {
        let mut acc = WindowAccumulator::<f64>::anchored(WindowConfig::default());
        assert!(acc.close_until(9_999).is_empty());
        let w = acc.close_until(14_000);
        let ranges: Vec<_> = w.iter().map(|d| (d.window_start, d.window_end)).collect();
        assert_eq!(ranges, vec![(0, 10_000), (2_000, 12_000), (4_000, 14_000)]);
        assert!(w.iter().all(|d| d.is_empty()));
    }

    proptest! {
        #[test]
        fn points_stay_inside_their_windows(
            mut ts in prop::collection::vec(0u64..60_000, 0..300),
            len in 1u64..20_000,
            stride_frac in 0.05f64..1.0,
        ) {
            ts.sort_unstable();
            let stride = ((len as f64 * stride_frac) as u64).max(1);
            let cfg = WindowConfig::new(len, stride).unwrap();
            let (w, stats) = window_stream(ts.iter().copied().map(pt), cfg);
            prop_assert_eq!(stats.dropped_late, 0);
            for d in &w {
                prop_assert_eq!(d.window_end - d.window_start, len);
                for p in &d.points {
                    prop_assert!(d.window_start <= p.t_ms && p.t_ms < d.window_end);
                }
            }
            // Each point appears in exactly the windows whose range holds it.
            for &t in &ts {
                let hits = w.iter().filter(|d| d.window_start <= t && t < d.window_end).count();
                let holding = w.iter().filter(|d| d.points.iter().any(|p| p.t_ms == t)).count();
                prop_assert_eq!(hits, holding);
                prop_assert!(hits >= 1);
            }
        }

        #[test]
        fn tiling_union_is_the_admitted_set(
            mut ts in prop::collection::vec(0u64..100_000, 0..300),
            len in 1u64..20_000,
        ) {
            ts.sort_unstable();
            let cfg = WindowConfig::new(len, len).unwrap();
            let (w, _) = window_stream(ts.iter().copied().map(pt), cfg);
            let mut union: Vec<u64> = w.iter().flat_map(|d| d.points.iter().map(|p| p.t_ms)).collect();
            union.sort_unstable();
            prop_assert_eq!(union, ts);
        }
    }
}
