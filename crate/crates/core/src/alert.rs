//! Threshold alerting over a sequence of window scores.
//!
//! An alert fires on the window that completes a run of
//! `consecutive_windows` scores strictly below `threshold`. A run produces at
//! most one alert; the tracker re-arms once a score at or above the threshold
//! is seen. After an alert no other alert may fire for `cooloff_windows`
//! windows.

use serde::{Deserialize, Serialize};

use crate::error::{GazeError, Result};
use crate::scalar::Scalar;
use crate::scoring::AttentionScore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlertPolicy {
    pub threshold: f64,
    pub consecutive_windows: usize,
    pub cooloff_windows: usize,
}

impl Default for AlertPolicy {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            consecutive_windows: 3,
            cooloff_windows: 5,
        }
    }
}

impl AlertPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(GazeError::config(
                "threshold",
                format!("{} is outside (0, 1)", self.threshold),
            ));
        }
        if self.consecutive_windows == 0 {
            return Err(GazeError::config("consecutive_windows", "must be positive"));
        }
        if self.cooloff_windows == 0 {
            return Err(GazeError::config("cooloff_windows", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    /// Position of the triggering window in the score sequence.
    pub window_index: usize,
    pub window_start: u64,
    pub window_end: u64,
    pub score: f64,
}

/// Incremental form of [`evaluate_alert`], one call per window.
#[derive(Debug, Clone)]
pub struct AlertTracker {
    policy: AlertPolicy,
    seen: usize,
    run: usize,
    fired_this_run: bool,
    last_alert: Option<usize>,
}

impl AlertTracker {
    pub fn new(policy: AlertPolicy) -> Self {
        Self {
            policy,
            seen: 0,
            run: 0,
            fired_this_run: false,
            last_alert: None,
        }
    }

    pub fn policy(&self) -> AlertPolicy {
        self.policy
    }

    /// Replaces the policy for subsequent windows; the current run carries
    /// over.
    pub fn set_policy(&mut self, policy: AlertPolicy) {
        self.policy = policy;
    }

    pub fn observe<T: Scalar>(&mut self, score: &AttentionScore<T>) -> Option<AlertEvent> {
        let index = self.seen;
        self.seen += 1;
        let value = score.value.as_f64();
        if value < self.policy.threshold {
            self.run += 1;
        } else {
            self.run = 0;
            self.fired_this_run = false;
            return None;
        }
        let cooled = self
            .last_alert
            .is_none_or(|last| index - last > self.policy.cooloff_windows);
        if self.run >= self.policy.consecutive_windows && !self.fired_this_run && cooled {
            self.fired_this_run = true;
            self.last_alert = Some(index);
            return Some(AlertEvent {
                window_index: index,
                window_start: score.window_start,
                window_end: score.window_end,
                score: value,
            });
        }
        None
    }
}

pub fn evaluate_alert<T: Scalar>(scores: &[AttentionScore<T>], policy: &AlertPolicy) -> Vec<AlertEvent> {
    let mut tracker = AlertTracker::new(*policy);
    scores.iter().filter_map(|s| tracker.observe(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::ScoreStrategy;
    use proptest::prelude::*;

    fn scores(values: &[f64]) -> Vec<AttentionScore<f64>> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut s = AttentionScore::zero(ScoreStrategy::Density)
                    .with_window(i as u64 * 2000, i as u64 * 2000 + 10_000);
                s.value = v;
                s
            })
            .collect()
    }

    #[test]
    fn fires_on_third_low_window() {
        let a = evaluate_alert(&scores(&[0.9, 0.4, 0.4, 0.4, 0.9]), &AlertPolicy::default());
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].window_index, 3);
        assert_eq!((a[0].window_start, a[0].window_end), (6000, 16_000));
        assert_eq!(a[0].score, 0.4);
    }

    #[test]
    fn no_alert_when_attentive_or_run_too_short() {
        assert!(evaluate_alert(&scores(&[0.9; 20]), &AlertPolicy::default()).is_empty());
        assert!(evaluate_alert(&scores(&[0.4, 0.4]), &AlertPolicy::default()).is_empty());
        // Equal to threshold is not below it.
        assert!(evaluate_alert(&scores(&[0.5; 10]), &AlertPolicy::default()).is_empty());
    }

    #[test]
    fn sustained_drop_alerts_once() {
        let a = evaluate_alert(&scores(&[0.1; 40]), &AlertPolicy::default());
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].window_index, 2);
    }

    #[test]
    fn cooloff_suppresses_quick_repeat() {
        // Low run, brief recovery, low run again inside the cool-off.
        let v = [0.1, 0.1, 0.1, 0.9, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
        let a = evaluate_alert(&scores(&v), &AlertPolicy::default());
        let idx: Vec<usize> = a.iter().map(|e| e.window_index).collect();
        // Second run completes at 6 (within 5 of 2) and is held until 8.
        assert_eq!(idx, vec![2, 8]);
    }

    #[test]
    fn policy_validation() {
        assert!(AlertPolicy::default().validate().is_ok());
        for t in [0.0, 1.0, 1.2, -0.1, f64::NAN] {
            let p = AlertPolicy { threshold: t, ..AlertPolicy::default() };
            assert!(p.validate().is_err(), "{t}");
        }
    }

    proptest! {
        #[test]
        fn alerts_respect_cooloff(
            values in prop::collection::vec(0.0..1.0f64, 0..200),
            consecutive in 1usize..5,
            cooloff in 1usize..10,
        ) {
            let policy = AlertPolicy { threshold: 0.5, consecutive_windows: consecutive, cooloff_windows: cooloff };
            let a = evaluate_alert(&scores(&values), &policy);
            for w in a.windows(2) {
                prop_assert!(w[1].window_index - w[0].window_index > cooloff);
            }
            for e in &a {
                let i = e.window_index;
                prop_assert!(i + 1 >= consecutive);
                prop_assert!(values[i + 1 - consecutive..=i].iter().all(|&v| v < 0.5));
            }
        }
    }
}
