//! Session clocks. Time is milliseconds since session start.
//!
//! The live service runs on a [`ScaledClock`]; `time_scale > 1` compresses a
//! class into less wall time for simulation. Tests drive a [`ManualClock`].

use std::future::Future;
use std::pin::Pin;
use std::sync::Arc;
use std::time::{Duration, Instant};

use tokio::sync::watch;

pub type SleepFuture<'a> = Pin<Box<dyn Future<Output = ()> + Send + 'a>>;

pub trait Clock: Send + Sync + 'static {
    fn now_ms(&self) -> u64;
    /// Resolves once `now_ms() >= t_ms`.
    fn sleep_until(&self, t_ms: u64) -> SleepFuture<'_>;
}

#[derive(Debug, Clone)]
pub struct ScaledClock {
    origin: Instant,
    scale: f64,
}

impl ScaledClock {
    pub fn new(scale: f64) -> Self {
        assert!(scale > 0.0 && scale.is_finite(), "time scale must be positive");
        Self {
            origin: Instant::now(),
            scale,
        }
    }
}

impl Clock for ScaledClock {
    fn now_ms(&self) -> u64 {
        (self.origin.elapsed().as_secs_f64() * 1000.0 * self.scale) as u64
    }

    fn sleep_until(&self, t_ms: u64) -> SleepFuture<'_> {
        let wall = Duration::from_secs_f64(t_ms as f64 / 1000.0 / self.scale);
        let deadline = tokio::time::Instant::from_std(self.origin + wall);
        Box::pin(async move {
            tokio::time::sleep_until(deadline).await;
            // Float rounding can leave us a hair short of `t_ms`.
            while self.now_ms() < t_ms {
                tokio::time::sleep(Duration::from_millis(1)).await;
            }
        })
    }
}

/// Clock that only moves when told to.
#[derive(Debug, Clone)]
pub struct ManualClock {
    tx: Arc<watch::Sender<u64>>,
}

impl Default for ManualClock {
    fn default() -> Self {
        Self::new()
    }
}

impl ManualClock {
    pub fn new() -> Self {
        Self {
            tx: Arc::new(watch::Sender::new(0)),
        }
    }

    /// Moves the clock forward to `t_ms`; never moves it backwards.
    pub fn advance_to(&self, t_ms: u64) {
        self.tx.send_if_modified(|now| {
            let moved = t_ms > *now;
            *now = (*now).max(t_ms);
            moved
        });
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        *self.tx.borrow()
    }

    fn sleep_until(&self, t_ms: u64) -> SleepFuture<'_> {
        let mut rx = self.tx.subscribe();
        Box::pin(async move {
            // The sender lives as long as `self`, so this cannot fail.
            let _ = rx.wait_for(|&now| now >= t_ms).await;
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn manual_clock_wakes_sleepers() {
        let clock = Arc::new(ManualClock::new());
        let c = clock.clone();
        let waiter = tokio::spawn(async move { c.sleep_until(2000).await });
        clock.advance_to(1000);
        tokio::task::yield_now().await;
        assert!(!waiter.is_finished());
        clock.advance_to(2500);
        waiter.await.unwrap();
        clock.advance_to(100);
        assert_eq!(clock.now_ms(), 2500);
    }

    #[tokio::test]
    async fn scaled_clock_runs_fast() {
        let clock = ScaledClock::new(100.0);
        clock.sleep_until(500).await;
        assert!(clock.now_ms() >= 500);
    }
}
