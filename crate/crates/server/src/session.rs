//! One class session: roster, admission, windowing, alerting and recording.
//!
//! [`SessionEngine`] is the single writer for a session. It never runs the
//! clustering itself; closed windows leave as immutable snapshots
//! ([`PendingWindow`]) and come back as [`WindowOutcome`]s through
//! [`SessionEngine::commit`], which is where alert state advances.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use gazeclass_core::{admit, Admission, AlertPolicy, AlertTracker, Distribution, GazePoint, StudentRef, WindowAccumulator};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{ConfigError, SessionConfig};
use crate::pipeline::WindowOutcome;
use crate::protocol::{parse_sample, HeatmapWire, WindowEvent};
use crate::record::{RecordLine, RecordWriter, WindowRecord, RECORD_VERSION};

/// Events kept for the summary endpoint (about half an hour at a 2 s stride).
pub const HISTORY_LIMIT: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("unknown session")]
    UnknownSession,
    #[error("session is closed")]
    Closed,
    #[error("unknown student token")]
    UnknownToken,
    #[error("bad instructor key")]
    BadKey,
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },
}

impl From<ConfigError> for SessionError {
    fn from(e: ConfigError) -> Self {
        SessionError::Invalid {
            field: e.field().unwrap_or("config").to_owned(),
            reason: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Open,
    Closed,
}

/// Random 128-bit hex string.
pub fn opaque_id() -> String {
    format!("{:032x}", rand::rng().random::<u128>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestCounts {
    pub accepted: u64,
    pub dropped: u64,
}

/// A closed window on its way to analysis.
#[derive(Debug, Clone)]
pub struct PendingWindow {
    pub index: u64,
    pub window: Arc<Distribution>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SessionStats {
    pub batches: u64,
    pub points_accepted: u64,
    pub points_dropped: u64,
    pub points_clamped: u64,
    pub points_late: u64,
    pub windows_published: u64,
    pub windows_skipped: u64,
    pub windows_degraded: u64,
    pub alerts: u64,
}

#[derive(Debug)]
pub struct SessionEngine {
    id: String,
    cfg: SessionConfig,
    state: SessionState,
    roster: HashMap<String, StudentRef>,
    acc: WindowAccumulator<f64>,
    tracker: AlertTracker,
    history: VecDeque<WindowEvent>,
    stats: SessionStats,
    record: Option<RecordWriter>,
    record_error: Option<String>,
}

impl SessionEngine {
    /// Starts a session and writes the record header.
    pub fn new(id: String, cfg: SessionConfig, created_at: String, record: Option<RecordWriter>) -> Self {
        let mut s = Self {
            acc: WindowAccumulator::anchored(cfg.window),
            tracker: AlertTracker::new(cfg.alert),
            id,
            cfg,
            state: SessionState::Open,
            roster: HashMap::new(),
            history: VecDeque::new(),
            stats: SessionStats::default(),
            record,
            record_error: None,
        };
        s.write(&RecordLine::Header {
            version: RECORD_VERSION,
            session: s.id.clone(),
            created_at,
            config: cfg,
        });
        s
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn roster_size(&self) -> usize {
        self.roster.len()
    }

    pub fn stats(&self) -> &SessionStats {
        &self.stats
    }

    pub fn history(&self) -> impl Iterator<Item = &WindowEvent> {
        self.history.iter()
    }

    pub fn alert_policy(&self) -> AlertPolicy {
        self.tracker.policy()
    }

    /// First record write failure, if any. Recording failures never stop the
    /// live session.
    pub fn record_error(&self) -> Option<&str> {
        self.record_error.as_deref()
    }

    fn write(&mut self, line: &RecordLine) {
        if let Some(w) = &mut self.record {
            if let Err(e) = w.append(line) {
                tracing::error!(session = %self.id, error = %e, "record write failed; recording stopped");
                self.record_error.get_or_insert(e.to_string());
                self.record = None;
            }
        }
    }

    fn ensure_open(&self) -> Result<(), SessionError> {
        match self.state {
            SessionState::Open => Ok(()),
            SessionState::Closed => Err(SessionError::Closed),
        }
    }

    /// Issues a fresh opaque token for a new student.
    pub fn join(&mut self, now_ms: u64) -> Result<String, SessionError> {
        self.ensure_open()?;
        let slot = StudentRef(self.roster.len() as u32);
        let token = loop {
            let t = opaque_id();
            if !self.roster.contains_key(&t) {
                break t;
            }
        };
        self.roster.insert(token.clone(), slot);
        self.write(&RecordLine::Join {
            t_ms: now_ms,
            student: slot.0,
        });
        Ok(token)
    }

    /// Admits a batch. Every point is stamped with the arrival time `now_ms`;
    /// client timestamps only order samples on the client.
    pub fn ingest(&mut self, token: &str, samples: &[Value], now_ms: u64) -> Result<IngestCounts, SessionError> {
        self.ensure_open()?;
        let slot = *self.roster.get(token).ok_or(SessionError::UnknownToken)?;
        let mut counts = IngestCounts::default();
        let mut points = Vec::with_capacity(samples.len());
        for s in samples {
            let [_, x, y] = parse_sample(s);
            match admit(x, y) {
                Admission::Accepted { x, y, clamped } => {
                    self.stats.points_clamped += u64::from(clamped);
                    points.push([x, y]);
                }
                Admission::Dropped(_) => counts.dropped += 1,
            }
        }
        counts.accepted = self.ingest_admitted(slot, &points, now_ms);
        counts.dropped += points.len() as u64 - counts.accepted;
        self.stats.batches += 1;
        self.stats.points_dropped += counts.dropped;
        self.write(&RecordLine::Ingest {
            t_ms: now_ms,
            student: slot.0,
            points,
            dropped: counts.dropped,
        });
        Ok(counts)
    }

    /// Pushes already-admitted points; shared by live ingest and replay.
    /// Returns how many were accepted; the rest arrived after their window
    /// closed.
    pub(crate) fn ingest_admitted(&mut self, slot: StudentRef, points: &[[f64; 2]], now_ms: u64) -> u64 {
        let mut accepted = 0;
        for &[x, y] in points {
            if self.acc.push(GazePoint::new(slot, now_ms, x, y)) {
                accepted += 1;
            } else {
                self.stats.points_late += 1;
            }
        }
        self.stats.points_accepted += accepted;
        accepted
    }

    /// End time of the oldest open window: the next moment a window is due.
    pub fn next_due_ms(&self) -> u64 {
        let k = self.acc.next_window().unwrap_or(0);
        self.cfg.window.end(k)
    }

    /// Closes every window that ended at or before `now_ms`.
    pub fn close_due(&mut self, now_ms: u64) -> Vec<PendingWindow> {
        self.acc
            .close_until(now_ms)
            .into_iter()
            .map(|w| PendingWindow {
                index: w.window_start / self.cfg.window.stride_ms,
                window: Arc::new(w),
            })
            .collect()
    }

    /// Closes every window up to the one holding the newest buffered point.
    pub(crate) fn flush_windows(&mut self) -> Vec<PendingWindow> {
        let stride = self.cfg.window.stride_ms;
        self.acc
            .flush()
            .into_iter()
            .map(|w| PendingWindow {
                index: w.window_start / stride,
                window: Arc::new(w),
            })
            .collect()
    }

    /// Records a window dropped by backpressure.
    pub fn skip(&mut self, index: u64) {
        self.stats.windows_skipped += 1;
        self.write(&RecordLine::Skipped {
            index,
            start_ms: self.cfg.window.start(index),
            end_ms: self.cfg.window.end(index),
        });
    }

    /// Applies alerting to an analysed window and produces its event.
    pub fn commit(&mut self, index: u64, outcome: &WindowOutcome) -> WindowEvent {
        let alert = self.tracker.observe(&outcome.score).is_some();
        let s = &outcome.score;
        let event = WindowEvent {
            session: self.id.clone(),
            start_ms: s.window_start,
            end_ms: s.window_end,
            score: s.value,
            n_points: s.n_points,
            n_clusters: s.n_clusters,
            heatmap: HeatmapWire {
                rows: outcome.heatmap.rows,
                cols: outcome.heatmap.cols,
                counts: outcome.heatmap.counts.clone(),
            },
            alert,
            degraded: outcome.degraded(),
        };
        self.stats.windows_published += 1;
        self.stats.alerts += u64::from(alert);
        self.stats.windows_degraded += u64::from(event.degraded);
        self.write(&RecordLine::Window(WindowRecord {
            index,
            start_ms: event.start_ms,
            end_ms: event.end_ms,
            score: event.score,
            n_points: event.n_points,
            n_clusters: event.n_clusters,
            alert,
            degraded: event.degraded,
            heatmap: event.heatmap.clone(),
        }));
        if self.history.len() == HISTORY_LIMIT {
            self.history.pop_front();
        }
        self.history.push_back(event.clone());
        event
    }

    /// Changes the alert threshold for subsequent windows. Setting the
    /// current value again is accepted and changes nothing.
    pub fn set_threshold(&mut self, threshold: f64, now_ms: u64) -> Result<f64, SessionError> {
        let policy = AlertPolicy {
            threshold,
            ..self.tracker.policy()
        };
        policy.validate().map_err(|e| SessionError::from(ConfigError::from(e)))?;
        if policy != self.tracker.policy() {
            self.tracker.set_policy(policy);
            self.cfg.alert = policy;
            self.write(&RecordLine::Threshold { t_ms: now_ms, threshold });
        }
        Ok(threshold)
    }

    /// Stops accepting joins and gaze. Windows already handed out may still
    /// be committed; call [`finish`](Self::finish) once they are.
    pub fn begin_close(&mut self) {
        self.state = SessionState::Closed;
    }

    /// Writes the final close line and flushes the record.
    pub fn finish(&mut self, now_ms: u64, reason: &str) {
        self.state = SessionState::Closed;
        if self.record.is_some() {
            self.write(&RecordLine::Close {
                t_ms: now_ms,
                reason: reason.to_owned(),
            });
            if let Some(w) = &mut self.record {
                let _ = w.flush();
            }
            self.record = None;
        }
    }

    pub(crate) fn slot_count(&self) -> u32 {
        self.roster.len() as u32
    }

    /// Registers a roster slot without a usable token (replay).
    pub(crate) fn join_slot(&mut self, now_ms: u64) -> StudentRef {
        let slot = StudentRef(self.slot_count());
        self.roster.insert(format!("replay-{}", slot.0), slot);
        self.write(&RecordLine::Join {
            t_ms: now_ms,
            student: slot.0,
        });
        slot
    }
}
