//! Seeded, portable random streams.
//!
//! Every random draw in the crate comes from ChaCha8 keyed by a 64-bit seed,
//! with independent consumers separated by the ChaCha stream id rather than by
//! re-seeding. ChaCha output is specified bit-for-bit, so the same
//! `(seed, stream)` pair yields the same samples on every platform.
//!
//! Stream allocation:
//!
//! | stream                   | consumer                                     |
//! |--------------------------|----------------------------------------------|
//! | `0`                      | uniform reference sample for a focus diff    |
//! | `1 + 2i`, `2 + 2i`       | the two uniform samples of null trial `i`    |
//! | `SIMULATOR_BASE + s`     | simulated student `s`                        |
//!
//! Uniform coordinates are drawn as `x` then `y` per point, each an `f64` in
//! `[0, 1)` with 53 random bits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

pub type GazeRng = ChaCha8Rng;

pub const FOCUS_SAMPLE_STREAM: u64 = 0;
pub const SIMULATOR_BASE: u64 = 1 << 48;

pub fn stream_rng(seed: u64, stream: u64) -> GazeRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Streams holding the two uniform samples of null-distribution trial `i`.
pub fn null_trial_streams(trial: u64) -> (u64, u64) {
    (1 + 2 * trial, 2 + 2 * trial)
}

pub fn uniform_points<T: Scalar, R: Rng>(rng: &mut R, n: usize) -> Vec<[T; 2]> {
    (0..n)
        .map(|_| {
            let x: f64 = rng.random();
            let y: f64 = rng.random();
            [T::lit(x), T::lit(y)]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_stream_repeat() {
        let a: Vec<[f64; 2]> = uniform_points(&mut stream_rng(42, 7), 64);
        let b: Vec<[f64; 2]> = uniform_points(&mut stream_rng(42, 7), 64);
        assert_eq!(a, b);
    }

    #[test]
    fn streams_are_distinct() {
        let a: Vec<[f64; 2]> = uniform_points(&mut stream_rng(42, 1), 8);
        let b: Vec<[f64; 2]> = uniform_points(&mut stream_rng(42, 2), 8);
        let c: Vec<[f64; 2]> = uniform_points(&mut stream_rng(43, 1), 8);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn pinned_first_draw() {
        // Guards against silent generator or stream-rule changes, which would
        // invalidate recorded fixtures.
        let mut rng = stream_rng(0, FOCUS_SAMPLE_STREAM);
        let v: u64 = rng.random();
        let mut again = ChaCha8Rng::seed_from_u64(0);
        again.set_stream(0);
        assert_eq!(v, again.random::<u64>());
        assert_eq!(null_trial_streams(0), (1, 2));
        assert_eq!(null_trial_streams(4999), (9999, 10000));
    }
}
