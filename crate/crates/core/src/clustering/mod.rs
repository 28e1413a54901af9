//! Density-based clustering of gaze points with a data-driven `eps`.
//!
//! In dynamic mode `eps` is read off the k-distance curve (distance of each
//! point to its `min_samples / 3`-th nearest neighbour, sorted) at its elbow.
//! A point is core when at least `min_samples` points, itself included, lie
//! within `eps` (inclusive). Clusters are the connected components of core
//! points; a non-core point within `eps` of some core joins the cluster of the
//! lowest-indexed such core; everything else is noise.

mod elbow;
mod grid;
mod kdist;

pub use elbow::{find_elbow, percentile, Elbow};
pub use grid::{distance, GridIndex};
pub use kdist::{kdistance_curve, GRID_THRESHOLD};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GazeError, Result};
use crate::scalar::Scalar;

pub const DEFAULT_MIN_SAMPLES: usize = 100;
/// Percentile of the k-distance curve used when no elbow can be found.
pub const FALLBACK_PERCENTILE: f64 = 0.9;
pub const FALLBACK_MIN_EPS: f64 = 1e-6;
/// Floor for the substituted `min_samples` on small windows.
pub const AUTO_SCALE_FLOOR: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsMode<T> {
    Dynamic,
    Fixed(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringParams<T> {
    pub min_samples: usize,
    pub eps: EpsMode<T>,
    /// Shrink `min_samples` on windows with fewer than `2 * min_samples` points.
    #[serde(default = "yes")]
    pub auto_scale: bool,
}

fn yes() -> bool {
    true
}

impl<T: Scalar> Default for ClusteringParams<T> {
    fn default() -> Self {
        Self {
            min_samples: DEFAULT_MIN_SAMPLES,
            eps: EpsMode::Dynamic,
            auto_scale: true,
        }
    }
}

impl<T: Scalar> ClusteringParams<T> {
    pub fn fixed(min_samples: usize, eps: T) -> Self {
        Self {
            min_samples,
            eps: EpsMode::Fixed(eps),
            auto_scale: true,
        }
    }

    pub fn dynamic(min_samples: usize) -> Self {
        Self {
            min_samples,
            eps: EpsMode::Dynamic,
            auto_scale: true,
        }
    }

    pub fn without_auto_scale(mut self) -> Self {
        self.auto_scale = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_samples < 2 {
            return Err(GazeError::config("min_samples", "must be at least 2"));
        }
        if let EpsMode::Fixed(e) = self.eps {
            if !(e > T::zero()) || !e.is_finite() {
                return Err(GazeError::config("eps", "fixed eps must be a positive number"));
            }
        }
        Ok(())
    }

    /// `min_samples` actually applied to a window of `n` points, and whether
    /// it was substituted.
    pub fn effective_min_samples(&self, n: usize) -> (usize, bool) {
        if self.auto_scale && n < 2 * self.min_samples {
            ((n / 6).max(AUTO_SCALE_FLOOR), true)
        } else {
            (self.min_samples, false)
        }
    }
}

/// Neighbour rank used for the k-distance curve.
pub fn kdist_k(min_samples: usize) -> usize {
    (min_samples / 3).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Noise,
    Cluster(usize),
}

impl Label {
    pub fn cluster(self) -> Option<usize> {
        match self {
            Label::Cluster(c) => Some(c),
            Label::Noise => None,
        }
    }

    pub fn is_noise(self) -> bool {
        self == Label::Noise
    }
}

/// Where `eps_used` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EpsSource {
    Fixed,
    Elbow { index: usize },
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult<T> {
    /// Cluster ids are assigned by size: `Cluster(0)` is the largest.
    pub labels: Vec<Label>,
    pub cluster_sizes: Vec<usize>,
    pub noise_count: usize,
    pub eps_used: T,
    pub eps_source: EpsSource,
    pub min_samples_used: usize,
    pub auto_scaled: bool,
    /// Sorted k-distance curve; empty when `eps` was fixed.
    pub kdist_curve: Vec<T>,
}

impl<T: Scalar> ClusteringResult<T> {
    /// Result for a window with no points.
    pub fn empty() -> Self {
        Self {
            labels: Vec::new(),
            cluster_sizes: Vec::new(),
            noise_count: 0,
            eps_used: T::zero(),
            eps_source: EpsSource::Fallback,
            min_samples_used: 0,
            auto_scaled: false,
            kdist_curve: Vec::new(),
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_sizes.len()
    }

    pub fn n_points(&self) -> usize {
        self.labels.len()
    }

    pub fn clustered(&self) -> usize {
        self.labels.len() - self.noise_count
    }

    /// Partition as sorted member lists, for order-independent comparison.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n_clusters()];
        for (i, l) in self.labels.iter().enumerate() {
            if let Label::Cluster(c) = l {
                groups[*c].push(i);
            }
        }
        groups.sort();
        groups
    }
}

/// Chooses `eps` for a window according to `mode`.
pub fn select_eps<T: Scalar>(
    points: &[[T; 2]],
    mode: EpsMode<T>,
    min_samples: usize,
) -> Result<(T, EpsSource, Vec<T>)> {
    match mode {
        EpsMode::Fixed(e) => Ok((e, EpsSource::Fixed, Vec::new())),
        EpsMode::Dynamic => {
            let curve = kdistance_curve(points, kdist_k(min_samples))?;
            match find_elbow(&curve) {
                Ok(e) if e.value > T::zero() => {
                    Ok((e.value, EpsSource::Elbow { index: e.index }, curve))
                }
                Ok(_) | Err(GazeError::DegenerateCurve) | Err(GazeError::CurveTooShort(_)) => {
                    let p = percentile(&curve, FALLBACK_PERCENTILE).unwrap_or(T::zero());
                    let eps = if p > T::zero() { p } else { T::lit(FALLBACK_MIN_EPS) };
                    Ok((eps, EpsSource::Fallback, curve))
                }
                Err(e) => Err(e),
            }
        }
    }
}

/// Compressed neighbour lists: `members[starts[i]..starts[i + 1]]` are the
/// points within `eps` of point `i`, itself included.
struct Neighborhoods {
    starts: Vec<usize>,
    members: Vec<u32>,
}

impl Neighborhoods {
    fn compute<T: Scalar>(points: &[[T; 2]], eps: T) -> Self {
        let lists: Vec<Vec<u32>> = if points.len() > GRID_THRESHOLD {
            let grid = GridIndex::build(points, eps);
            points
                .par_iter()
                .map(|q| {
                    let mut out = Vec::new();
                    grid.within(points, q, eps, &mut out);
                    out.sort_unstable();
                    out
                })
                .collect()
        } else {
            points
                .par_iter()
                .map(|q| {
                    (0..points.len() as u32)
                        .filter(|&j| distance(&points[j as usize], q) <= eps)
                        .collect()
                })
                .collect()
        };
        let mut starts = Vec::with_capacity(lists.len() + 1);
        starts.push(0);
        for l in &lists {
            starts.push(starts.last().unwrap() + l.len());
        }
        let members = lists.into_iter().flatten().collect();
        Self { starts, members }
    }

    fn of(&self, i: usize) -> &[u32] {
        &self.members[self.starts[i]..self.starts[i + 1]]
    }

    fn count(&self, i: usize) -> usize {
        self.starts[i + 1] - self.starts[i]
    }
}

pub fn dbscan<T: Scalar>(points: &[[T; 2]], params: &ClusteringParams<T>) -> Result<ClusteringResult<T>> {
    params.validate()?;
    let n = points.len();
    if n == 0 {
        return Err(GazeError::EmptyInput);
    }
    let (min_samples, auto_scaled) = params.effective_min_samples(n);
    let (eps, eps_source, kdist_curve) = select_eps(points, params.eps, min_samples)?;
    let (labels, cluster_sizes) = cluster_with(points, eps, min_samples);
    let noise_count = labels.iter().filter(|l| l.is_noise()).count();
    Ok(ClusteringResult {
        labels,
        cluster_sizes,
        noise_count,
        eps_used: eps,
        eps_source,
        min_samples_used: min_samples,
        auto_scaled,
        kdist_curve,
    })
}

/// Core clustering step with explicit `eps` and `min_samples`. Returns
/// per-point labels and cluster sizes in descending order.
pub fn cluster_with<T: Scalar>(points: &[[T; 2]], eps: T, min_samples: usize) -> (Vec<Label>, Vec<usize>) {
    let n = points.len();
    let hood = Neighborhoods::compute(points, eps);
    let core: Vec<bool> = (0..n).map(|i| hood.count(i) >= min_samples).collect();

    // Connected components over core points, discovered in index order.
    let mut component = vec![usize::MAX; n];
    let mut n_components = 0;
    let mut stack = Vec::new();
    for seed in 0..n {
        if !core[seed] || component[seed] != usize::MAX {
            continue;
        }
        component[seed] = n_components;
        stack.push(seed);
        while let Some(p) = stack.pop() {
            for &q in hood.of(p) {
                let q = q as usize;
                if core[q] && component[q] == usize::MAX {
                    component[q] = n_components;
                    stack.push(q);
                }
            }
        }
        n_components += 1;
    }

    // Border points: neighbour lists are ascending, so the first core hit is
    // the lowest-indexed one.
    for i in 0..n {
        if core[i] {
            continue;
        }
        if let Some(&c) = hood.of(i).iter().find(|&&q| core[q as usize]) {
            component[i] = component[c as usize];
        }
    }

    let mut sizes = vec![0usize; n_components];
    for &c in &component {
        if c != usize::MAX {
            sizes[c] += 1;
        }
    }
    // Relabel by descending size; discovery order breaks ties.
    let mut order: Vec<usize> = (0..n_components).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    let mut rank = vec![0; n_components];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    let labels = component
        .iter()
        .map(|&c| if c == usize::MAX { Label::Noise } else { Label::Cluster(rank[c]) })
        .collect();
    let sizes = order.iter().map(|&c| sizes[c]).collect();
    (labels, sizes)
}
