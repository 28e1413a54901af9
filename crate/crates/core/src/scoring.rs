//! Class attention score for one window.
//!
//! The default `density` strategy multiplies two fractions taken from the
//! clustering of the window: how many points belong to any cluster, and how
//! many of those belong to the largest cluster. One dominant cluster scores
//! near 1, an even two-way split near 0.5, unstructured gaze near 0.
//!
//! The `statistical` strategy maps the randomization-test z statistic onto
//! `[0, 1]` by saturating at a reference z.

use serde::{Deserialize, Serialize};

use crate::clustering::ClusteringResult;
use crate::error::Result;
use crate::metrics::GazeDistribution;
use crate::scalar::Scalar;
use crate::stats::{random_focus_diff, conclude, NullDistribution, RandomizationConfig};

/// Default z at which the statistical score saturates to 1.
pub const DEFAULT_Z_REF: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreStrategy {
    Density,
    Statistical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionScore<T> {
    pub value: T,
    pub window_start: u64,
    pub window_end: u64,
    pub n_points: usize,
    pub n_clusters: usize,
    pub clustered_fraction: T,
    pub concentration: T,
    pub strategy: ScoreStrategy,
    pub auto_scaled: bool,
    /// z statistic, statistical strategy only.
    pub z: Option<T>,
}

impl<T: Scalar> AttentionScore<T> {
    pub fn with_window(mut self, start: u64, end: u64) -> Self {
        self.window_start = start;
        self.window_end = end;
        self
    }

    /// Score of a window that could not be evaluated.
    pub fn zero(strategy: ScoreStrategy) -> Self {
        Self {
            value: T::zero(),
            window_start: 0,
            window_end: 0,
            n_points: 0,
            n_clusters: 0,
            clustered_fraction: T::zero(),
            concentration: T::zero(),
            strategy,
            auto_scaled: false,
            z: None,
        }
    }
}

/// Density strategy. `n_points` is the window size; an empty window scores 0.
pub fn score_window<T: Scalar>(c: &ClusteringResult<T>, n_points: usize) -> AttentionScore<T> {
    let clustered: usize = c.cluster_sizes.iter().sum();
    let clustered_fraction = if n_points == 0 {
        T::zero()
    } else {
        T::from_count(n_points.saturating_sub(c.noise_count)) / T::from_count(n_points)
    };
    let concentration = match c.cluster_sizes.first() {
        Some(&largest) if clustered > 0 => T::from_count(largest) / T::from_count(clustered),
        _ => T::zero(),
    };
    let value = (clustered_fraction * concentration).max(T::zero()).min(T::one());
    AttentionScore {
        value,
        window_start: 0,
        window_end: 0,
        n_points,
        n_clusters: if n_points == 0 { 0 } else { c.n_clusters() },
        clustered_fraction,
        concentration,
        strategy: ScoreStrategy::Density,
        auto_scaled: c.auto_scaled,
        z: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticalScoring {
    pub randomization: RandomizationConfig,
    pub z_ref: f64,
}

impl Default for StatisticalScoring {
    fn default() -> Self {
        Self {
            randomization: RandomizationConfig::default(),
            z_ref: DEFAULT_Z_REF,
        }
    }
}

/// Statistical strategy: `clamp(z / z_ref, 0, 1)`.
pub fn score_window_statistical<T: Scalar>(
    d: &GazeDistribution<T>,
    cfg: &StatisticalScoring,
) -> Result<AttentionScore<T>> {
    let null = crate::stats::null_distribution(&cfg.randomization)?;
    score_window_statistical_with_null(d, cfg, &null)
}

pub fn score_window_statistical_with_null<T: Scalar>(
    d: &GazeDistribution<T>,
    cfg: &StatisticalScoring,
    null: &NullDistribution<T>,
) -> Result<AttentionScore<T>> {
    let diff = random_focus_diff(&d.coords(), &cfg.randomization)?;
    let r = conclude(diff, cfg.randomization.alpha, null.clone())?;
    let value = (r.z / T::lit(cfg.z_ref)).max(T::zero()).min(T::one());
    Ok(AttentionScore {
        value,
        window_start: d.window_start,
        window_end: d.window_end,
        n_points: d.len(),
        n_clusters: 0,
        clustered_fraction: T::zero(),
        concentration: T::zero(),
        strategy: ScoreStrategy::Statistical,
        auto_scaled: false,
        z: Some(r.z),
    })
}
