//! Class-level attention analytics from anonymous gaze streams.
//!
//! Normalized gaze points from many students are grouped into sliding
//! windows; each window is clustered with DBSCAN (eps tuned from the elbow of
//! the k-distance curve) and scored, and scores feed a debounced threshold
//! alert. A randomization test on cohesiveness checks whether a distribution
//! is more concentrated than uniform gaze, and [`simulate`] produces synthetic
//! classrooms for end-to-end testing.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` instantiation.

pub mod alert;
pub mod clustering;
mod error;
pub mod gaze;
pub mod heatmap;
pub mod metrics;
pub mod rng;
mod scalar;
pub mod scoring;
pub mod simulate;
pub mod stats;
pub mod window;

pub use alert::{evaluate_alert, AlertEvent, AlertPolicy, AlertTracker};
pub use clustering::{
    dbscan, find_elbow, kdistance_curve, ClusteringParams, ClusteringResult, EpsMode, Label,
};
pub use error::{GazeError, Result};
pub use gaze::{admit, Admission, DropReason, GazePoint, StudentRef};
pub use heatmap::HeatmapGrid;
pub use metrics::{centroid, cohesiveness, Centroid, GazeDistribution};
pub use scalar::{stable_sum, Scalar};
pub use scoring::{score_window, score_window_statistical, AttentionScore, ScoreStrategy};
pub use stats::{
    null_distribution, random_focus_diff, randomization_test, RandomizationConfig,
    RandomizationResult,
};
pub use window::{window_stream, WindowAccumulator, WindowConfig};

pub type Point = GazePoint<f64>;
pub type Distribution = GazeDistribution<f64>;
pub type Clustering = ClusteringResult<f64>;
pub type Params = ClusteringParams<f64>;
pub type Score = AttentionScore<f64>;
pub type Randomization = RandomizationResult<f64>;

pub type Point32 = GazePoint<f32>;
pub type Distribution32 = GazeDistribution<f32>;
pub type Clustering32 = ClusteringResult<f32>;
