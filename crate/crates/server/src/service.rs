//! Live session registry.
//!
//! Each session runs two tasks. The ticker wakes at every window end, closes
//! due windows under the engine lock and hands the snapshots to the worker.
//! The worker analyses them on the blocking pool, commits the results, and
//! broadcasts the events. Ingestion only ever takes the engine lock briefly;
//! analysis never holds it.
//!
//! Backpressure: if more than [`MAX_PENDING_WINDOWS`] windows are waiting
//! when the worker comes up for air, all but the newest are skipped and
//! counted.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::{broadcast, mpsc, watch};
use tokio::task::JoinHandle;

use crate::clock::Clock;
use crate::config::{ServerConfig, SessionConfig};
use crate::pipeline::Analyzer;
use crate::protocol::{InstructorMessage, WindowEvent};
use crate::record::RecordWriter;
use crate::session::{opaque_id, IngestCounts, PendingWindow, SessionEngine, SessionError, SessionState, SessionStats};

pub const MAX_PENDING_WINDOWS: usize = 2;
const EVENT_BUFFER: usize = 256;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl LatencySummary {
    /// Nearest-rank percentiles.
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let rank = |q: f64| s[((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
        Self {
            count: s.len(),
            p50_ms: rank(0.5),
            p99_ms: rank(0.99),
            max_ms: s[s.len() - 1],
        }
    }
}

/// Aggregate view of a session, safe to hand to the instructor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session: String,
    pub state: SessionState,
    pub created_at: String,
    pub roster_size: usize,
    pub config: SessionConfig,
    pub stats: SessionStats,
    /// Time from a window closing to its event being published.
    pub latency: LatencySummary,
    pub windows: Vec<WindowEvent>,
}

struct Job {
    pending: PendingWindow,
    closed_at: Instant,
}

struct Tasks {
    ticker: JoinHandle<()>,
    worker: JoinHandle<()>,
}

pub struct SessionHandle {
    id: String,
    key: String,
    created_at: String,
    origin_ms: u64,
    clock: Arc<dyn Clock>,
    analyzer: Arc<Analyzer>,
    engine: Mutex<SessionEngine>,
    events: broadcast::Sender<InstructorMessage>,
    closed: watch::Sender<bool>,
    latencies: Mutex<Vec<f64>>,
    tasks: tokio::sync::Mutex<Option<Tasks>>,
}

impl std::fmt::Debug for SessionHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionHandle").field("id", &self.id).finish_non_exhaustive()
    }
}

impl SessionHandle {
    pub fn id(&self) -> &str {
        &self.id
    }

    /// Session time in milliseconds.
    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms().saturating_sub(self.origin_ms)
    }

    pub fn check_key(&self, key: Option<&str>) -> Result<(), SessionError> {
        match key {
            Some(k) if k == self.key => Ok(()),
            _ => Err(SessionError::BadKey),
        }
    }

    pub fn state(&self) -> SessionState {
        self.engine.lock().state()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<InstructorMessage> {
        self.events.subscribe()
    }

    /// Resolves once the session has closed.
    pub async fn closed(&self) {
        let mut rx = self.closed.subscribe();
        let _ = rx.wait_for(|&c| c).await;
    }

    pub fn join(&self) -> Result<String, SessionError> {
        let now = self.now_ms();
        self.engine.lock().join(now)
    }

    pub fn ingest(&self, token: &str, samples: &[Value]) -> Result<IngestCounts, SessionError> {
        let mut engine = self.engine.lock();
        // Stamped under the lock so arrival times never go backwards.
        let now = self.now_ms();
        engine.ingest(token, samples, now)
    }

    /// Applies a new threshold and tells every instructor.
    pub fn set_threshold(&self, threshold: f64) -> Result<f64, SessionError> {
        let applied = {
            let mut engine = self.engine.lock();
            let now = self.now_ms();
            engine.set_threshold(threshold, now)?
        };
        let _ = self.events.send(InstructorMessage::Threshold {
            threshold: applied,
            accepted: true,
            reason: None,
        });
        Ok(applied)
    }

    pub fn summary(&self) -> SessionSummary {
        let engine = self.engine.lock();
        SessionSummary {
            session: self.id.clone(),
            state: engine.state(),
            created_at: self.created_at.clone(),
            roster_size: engine.roster_size(),
            config: *engine.config(),
            stats: engine.stats().clone(),
            latency: LatencySummary::from_samples(&self.latencies.lock()),
            windows: engine.history().cloned().collect(),
        }
    }

    /// Stops intake, drains windows already handed to the worker, writes the
    /// close line and notifies subscribers. Idempotent.
    pub async fn close(&self, reason: &str) {
        let Some(tasks) = self.tasks.lock().await.take() else {
            return;
        };
        self.engine.lock().begin_close();
        let _ = self.closed.send(true);
        tasks.ticker.abort();
        let _ = tasks.ticker.await;
        // The ticker owned the job sender; the worker ends once it drains.
        let _ = tasks.worker.await;
        let now = self.now_ms();
        self.engine.lock().finish(now, reason);
        let _ = self.events.send(InstructorMessage::Closed {
            session: self.id.clone(),
        });
        tracing::info!(session = %self.id, reason, "session closed");
    }

    async fn run_ticker(self: Arc<Self>, jobs: mpsc::UnboundedSender<Job>) {
        loop {
            let due = self.engine.lock().next_due_ms();
            self.clock.sleep_until(self.origin_ms + due).await;
            let pending = {
                let mut engine = self.engine.lock();
                if engine.state() == SessionState::Closed {
                    return;
                }
                let now = self.now_ms();
                engine.close_due(now)
            };
            let closed_at = Instant::now();
            for pending in pending {
                if jobs.send(Job { pending, closed_at }).is_err() {
                    return;
                }
            }
        }
    }

    async fn run_worker(self: Arc<Self>, mut jobs: mpsc::UnboundedReceiver<Job>) {
        while let Some(first) = jobs.recv().await {
            let mut batch = vec![first];
            while let Ok(j) = jobs.try_recv() {
                batch.push(j);
            }
            if batch.len() > MAX_PENDING_WINDOWS {
                let stale: Vec<_> = batch.drain(..batch.len() - 1).collect();
                let mut engine = self.engine.lock();
                for j in &stale {
                    engine.skip(j.pending.index);
                }
                tracing::warn!(session = %self.id, skipped = stale.len(), "window processing lagging; skipped to latest");
            }
            for job in batch {
                let analyzer = self.analyzer.clone();
                let window = job.pending.window.clone();
                let outcome = match tokio::task::spawn_blocking(move || analyzer.process(&window)).await {
                    Ok(o) => o,
                    Err(e) => self.analyzer.failed(&job.pending.window, format!("analysis aborted: {e}")),
                };
                if let Some(err) = &outcome.error {
                    tracing::warn!(session = %self.id, window = job.pending.index, error = %err, "window degraded");
                }
                let event = self.engine.lock().commit(job.pending.index, &outcome);
                self.latencies.lock().push(job.closed_at.elapsed().as_secs_f64() * 1000.0);
                let _ = self.events.send(InstructorMessage::Window(event));
            }
        }
    }
}

/// What `create_session` hands back: the only time the key is revealed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub session: String,
    pub instructor_key: String,
    pub config: SessionConfig,
}

pub struct Service {
    cfg: ServerConfig,
    clock: Arc<dyn Clock>,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
}

impl Service {
    pub fn new(cfg: ServerConfig, clock: Arc<dyn Clock>) -> Arc<Self> {
        Arc::new(Self {
            cfg,
            clock,
            sessions: RwLock::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.cfg
    }

    pub fn default_session_config(&self) -> SessionConfig {
        self.cfg.session
    }

    pub fn record_path(&self, session: &str) -> Option<PathBuf> {
        self.cfg
            .server
            .record_dir
            .as_ref()
            .map(|d| d.join(format!("{session}.ndjson")))
    }

    pub fn get(&self, id: &str) -> Result<Arc<SessionHandle>, SessionError> {
        self.sessions.read().get(id).cloned().ok_or(SessionError::UnknownSession)
    }

    pub async fn create_session(&self, cfg: SessionConfig) -> Result<Created, SessionError> {
        cfg.validate()?;
        let analyzer = tokio::task::spawn_blocking(move || Analyzer::new(cfg))
            .await
            .map_err(|e| SessionError::Invalid {
                field: "scoring".into(),
                reason: e.to_string(),
            })?
            .map_err(|e| SessionError::from(crate::config::ConfigError::from(e)))?;
        let id = opaque_id();
        let key = opaque_id();
        let record = match self.record_path(&id) {
            Some(path) => Some(RecordWriter::create(&path).map_err(|e| SessionError::Invalid {
                field: "server.record_dir".into(),
                reason: e.to_string(),
            })?),
            None => None,
        };
        let created_at = time::OffsetDateTime::now_utc()
            .format(&time::format_description::well_known::Rfc3339)
            .unwrap_or_default();
        let handle = Arc::new(SessionHandle {
            engine: Mutex::new(SessionEngine::new(id.clone(), cfg, created_at.clone(), record)),
            id: id.clone(),
            key: key.clone(),
            created_at,
            origin_ms: self.clock.now_ms(),
            clock: self.clock.clone(),
            analyzer: Arc::new(analyzer),
            events: broadcast::channel(EVENT_BUFFER).0,
            closed: watch::Sender::new(false),
            latencies: Mutex::new(Vec::new()),
            tasks: tokio::sync::Mutex::new(None),
        });
        let (tx, rx) = mpsc::unbounded_channel();
        let tasks = Tasks {
            ticker: tokio::spawn(handle.clone().run_ticker(tx)),
            worker: tokio::spawn(handle.clone().run_worker(rx)),
        };
        *handle.tasks.lock().await = Some(tasks);
        self.sessions.write().insert(id.clone(), handle);
        tracing::info!(session = %id, "session created");
        Ok(Created {
            session: id,
            instructor_key: key,
            config: cfg,
        })
    }

    /// Closes every open session. Used on shutdown.
    pub async fn shutdown(&self) {
        let handles: Vec<_> = self.sessions.read().values().cloned().collect();
        for h in handles {
            h.close("shutdown").await;
        }
    }
}
