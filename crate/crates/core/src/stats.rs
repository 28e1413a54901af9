//! Randomization test: is a gaze distribution more cohesive than chance?
//!
//! The observed statistic is the *Random-Focus diff*, the cohesiveness of a
//! uniform sample minus the cohesiveness of the observed distribution. The
//! null is the distribution of *Random-Random diffs* between two independent
//! uniform samples. The observed diff is standardized against the signed null
//! and tested one-sided (upper tail): attention shows up as a large positive
//! diff.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{GazeError, Result};
use crate::metrics::cohesiveness;
use crate::rng::{null_trial_streams, stream_rng, uniform_points, FOCUS_SAMPLE_STREAM};
use crate::scalar::{stable_sum, Scalar};

/// Below this many trials the null distribution is too coarse to trust.
pub const MIN_USEFUL_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizationConfig {
    pub trials: usize,
    pub sample_size: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        Self {
            trials: 5000,
            sample_size: 5000,
            seed: 0,
            alpha: 0.05,
        }
    }
}

impl RandomizationConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 2 {
            return Err(GazeError::config("trials", "need at least 2 trials"));
        }
        if self.sample_size == 0 {
            return Err(GazeError::config("sample_size", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(GazeError::config("alpha", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Whether the configured trial count is below [`MIN_USEFUL_TRIALS`].
    pub fn is_underpowered(&self) -> bool {
        self.trials < MIN_USEFUL_TRIALS
    }
}

/// Signed Random-Random diffs with their summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NullDistribution<T> {
    pub diffs: Vec<T>,
    pub mean: T,
    /// Sample standard deviation (divides by `trials - 1`).
    pub std: T,
}

impl<T: Scalar> NullDistribution<T> {
    pub fn from_diffs(diffs: Vec<T>) -> Self {
        let n = T::from_count(diffs.len());
        let mean = stable_sum(diffs.iter().copied()) / n;
        let ss = stable_sum(diffs.iter().map(|&d| (d - mean) * (d - mean)));
        let std = if diffs.len() > 1 {
            (ss / T::from_count(diffs.len() - 1)).sqrt()
        } else {
            T::zero()
        };
        Self { diffs, mean, std }
    }

    /// Histogram of `|diff|` over `bins` equal-width bins on `[0, max|diff|]`,
    /// as `(lower, upper, count)`.
    pub fn abs_histogram(&self, bins: usize) -> Vec<(T, T, usize)> {
        let bins = bins.max(1);
        let top = self
            .diffs
            .iter()
            .fold(T::zero(), |m, d| m.max(d.abs()));
        let width = if top > T::zero() {
            top / T::from_count(bins)
        } else {
            T::one()
        };
        let mut counts = vec![0usize; bins];
        for d in &self.diffs {
            let b = (d.abs() / width).floor().to_usize().unwrap_or(0).min(bins - 1);
            counts[b] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(i, c)| (width * T::from_count(i), width * T::from_count(i + 1), c))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomizationResult<T> {
    pub random_focus_diff: T,
    pub null: NullDistribution<T>,
    pub z: T,
    /// Upper-tail standard normal probability of `z`.
    pub p: f64,
    /// Fraction of null diffs at or above the observed diff.
    pub empirical_tail: f64,
    pub reject_null: bool,
}

impl<T> RandomizationResult<T> {
    pub fn null_mean(&self) -> &T {
        &self.null.mean
    }
}

pub fn uniform_cohesiveness<T: Scalar>(seed: u64, stream: u64, n: usize) -> T {
    let sample: Vec<[T; 2]> = uniform_points(&mut stream_rng(seed, stream), n);
    cohesiveness(&sample).expect("sample size is positive")
}

/// Cohesiveness of the seeded uniform reference sample minus the
/// cohesiveness of `points`.
pub fn random_focus_diff<T: Scalar>(points: &[[T; 2]], cfg: &RandomizationConfig) -> Result<T> {
    cfg.validate()?;
    let observed = cohesiveness(points)?;
    Ok(uniform_cohesiveness::<T>(cfg.seed, FOCUS_SAMPLE_STREAM, cfg.sample_size) - observed)
}

/// Same statistic against an explicit, previously recorded reference sample.
pub fn random_focus_diff_against<T: Scalar>(points: &[[T; 2]], reference: &[[T; 2]]) -> Result<T> {
    Ok(cohesiveness(reference)? - cohesiveness(points)?)
}

/// `trials` Random-Random diffs. Trials run in parallel; each trial draws
/// from its own streams, so the output matches a sequential run exactly.
pub fn null_distribution<T: Scalar>(cfg: &RandomizationConfig) -> Result<NullDistribution<T>> {
    cfg.validate()?;
    let diffs = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|i| null_trial::<T>(cfg, i))
        .collect();
    Ok(NullDistribution::from_diffs(diffs))
}

fn null_trial<T: Scalar>(cfg: &RandomizationConfig, trial: u64) -> T {
    let (a, b) = null_trial_streams(trial);
    uniform_cohesiveness::<T>(cfg.seed, a, cfg.sample_size)
        - uniform_cohesiveness::<T>(cfg.seed, b, cfg.sample_size)
}

/// Sequential evaluation of the null, used to check the parallel path.
pub fn null_distribution_sequential<T: Scalar>(cfg: &RandomizationConfig) -> Result<NullDistribution<T>> {
    cfg.validate()?;
    let diffs = (0..cfg.trials as u64).map(|i| null_trial::<T>(cfg, i)).collect();
    Ok(NullDistribution::from_diffs(diffs))
}

pub fn upper_tail_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    (0.5 * erfc(z / std::f64::consts::SQRT_2)).clamp(0.0, 1.0)
}

pub fn randomization_test<T: Scalar>(
    points: &[[T; 2]],
    cfg: &RandomizationConfig,
) -> Result<RandomizationResult<T>> {
    let null = null_distribution(cfg)?;
    randomization_test_with_null(points, cfg, null)
}

/// Runs the test against an already computed null. The null depends only on
/// the config, so one null can serve many windows.
pub fn randomization_test_with_null<T: Scalar>(
    points: &[[T; 2]],
    cfg: &RandomizationConfig,
    null: NullDistribution<T>,
) -> Result<RandomizationResult<T>> {
    let diff = random_focus_diff(points, cfg)?;
    conclude(diff, cfg.alpha, null)
}

/// Standardizes an observed diff against the null.
pub fn conclude<T: Scalar>(diff: T, alpha: f64, null: NullDistribution<T>) -> Result<RandomizationResult<T>> {
    if !(null.std > T::zero()) {
        return Err(GazeError::DegenerateNull);
    }
    let z = (diff - null.mean) / null.std;
    let p = upper_tail_p(z.as_f64());
    let at_or_above = null.diffs.iter().filter(|&&d| d >= diff).count();
    let empirical_tail = at_or_above as f64 / null.diffs.len() as f64;
    Ok(RandomizationResult {
        random_focus_diff: diff,
        null,
        z,
        p,
        empirical_tail,
        reject_null: p < alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn small(seed: u64) -> RandomizationConfig {
        RandomizationConfig {
            trials: 400,
            sample_size: 2000,
            seed,
            alpha: 0.05,
        }
    }

    fn blob(sigma: f64, n: usize, seed: u64) -> Vec<[f64; 2]> {
        let mut rng = stream_rng(seed, 99);
        let d = Normal::new(0.0, sigma).unwrap();
        (0..n)
            .map(|_| [0.5 + d.sample(&mut rng), 0.5 + d.sample(&mut rng)])
            .collect()
    }

    #[test]
    fn frozen_gaze_diff_is_uniform_cohesiveness() {
        let pts = vec![[0.3_f64, 0.3]; 5000];
        let d = random_focus_diff(&pts, &RandomizationConfig::with_seed(1)).unwrap();
        assert!((d - 1.0 / 6.0).abs() < 0.01, "{d}");
    }

    #[test]
    fn uniform_input_diff_is_near_zero() {
        let pts: Vec<[f64; 2]> = uniform_points(&mut stream_rng(1, 12345), 5000);
        let d = random_focus_diff(&pts, &RandomizationConfig::with_seed(1)).unwrap();
        assert!(d.abs() < 0.01, "{d}");
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(
            random_focus_diff::<f64>(&[], &small(0)),
            Err(GazeError::EmptyInput)
        );
    }

    #[test]
    fn null_is_deterministic_and_parallel_safe() {
        let a: NullDistribution<f64> = null_distribution(&small(7)).unwrap();
        let b: NullDistribution<f64> = null_distribution(&small(7)).unwrap();
        let c: NullDistribution<f64> = null_distribution_sequential(&small(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let d: NullDistribution<f64> = null_distribution(&small(8)).unwrap();
        assert_ne!(a.diffs, d.diffs);
    }

    #[test]
    fn null_is_centred_and_peaks_at_small_diffs() {
        let null: NullDistribution<f64> = null_distribution(&RandomizationConfig {
            trials: 2000,
            sample_size: 1000,
            seed: 3,
            alpha: 0.05,
        })
        .unwrap();
        let tol = 3.0 * null.std / (null.diffs.len() as f64).sqrt();
        assert!(null.mean.abs() <= tol, "mean {} tol {}", null.mean, tol);
        let h = null.abs_histogram(20);
        assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), 2000);
        let peak = h.iter().enumerate().max_by_key(|(_, b)| b.2).unwrap().0;
        assert!(peak <= 2, "histogram peak at bin {peak}: {h:?}");
        assert!(h[0].2 > h[10].2 && h[10].2 >= h[19].2);
    }

    #[test]
    fn tight_blob_rejects() {
        let pts = blob(0.02, 5000, 1);
        let r = randomization_test(&pts, &small(11)).unwrap();
        assert!(r.reject_null);
        assert!(r.p < 1e-6, "p = {}", r.p);
        assert_eq!(r.empirical_tail, 0.0);
    }

    #[test]
    fn z_grows_as_blob_tightens() {
        let cfg = small(5);
        let null: NullDistribution<f64> = null_distribution(&cfg).unwrap();
        let zs: Vec<f64> = [0.2, 0.1, 0.05, 0.02]
            .iter()
            .map(|&s| {
                randomization_test_with_null(&blob(s, 3000, 2), &cfg, null.clone())
                    .unwrap()
                    .z
            })
            .collect();
        assert!(zs.windows(2).all(|w| w[0] <= w[1]), "{zs:?}");
    }

    #[test]
    fn degenerate_null() {
        let null = NullDistribution::from_diffs(vec![0.0_f64; 10]);
        assert!(matches!(conclude(0.1, 0.05, null), Err(GazeError::DegenerateNull)));
    }

    #[test]
    fn upper_tail() {
        assert!((upper_tail_p(0.0) - 0.5).abs() < 1e-15);
        let p = upper_tail_p(1.6448536269514722);
        assert!((p - 0.05).abs() < 1e-9, "{p}");
        assert!(upper_tail_p(40.0) < 1e-300);
        let q = upper_tail_p(-1.0);
        assert!((q - 0.8413447460685429).abs() < 1e-9, "{q:e}");
    }
}
