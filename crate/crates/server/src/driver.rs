//! Drives a simulated class through the session service.
//!
//! [`run_in_process`] is lockstep and deterministic: batches are ingested at
//! their simulated send times and windows close exactly on schedule, with
//! no sockets and no wall clock. [`run_over_network`] speaks the real wire
//! protocol to a running server, one WebSocket per student.

use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use gazeclass_core::simulate::{batch_samples, generate_stream, RawSample, ScenarioScript};
use gazeclass_core::GazeError;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio_tungstenite::tungstenite::Message;

use crate::clock::{Clock, ScaledClock};
use crate::config::SessionConfig;
use crate::http::{Joined, KEY_HEADER};
use crate::pipeline::Analyzer;
use crate::protocol::{InstructorMessage, StudentMessage, StudentReply, WindowEvent};
use crate::record::RecordWriter;
use crate::service::{Created, LatencySummary, SessionSummary};
use crate::session::{SessionEngine, SessionError};

/// Client-side batching: flush every 500 ms or at 32 samples.
pub const FLUSH_MS: u64 = 500;
pub const FLUSH_POINTS: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum DriverError {
    #[error(transparent)]
    Scenario(#[from] GazeError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("cannot reach {url}: {reason}")]
    Unreachable { url: String, reason: String },
    #[error("server answered {status}: {body}")]
    Http { status: u16, body: String },
    #[error("{failed} of {total} student clients failed; aborting")]
    TooManyFailures { failed: usize, total: usize },
    #[error("protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub session: String,
    pub students: usize,
    pub duration_ms: u64,
    pub events: Vec<WindowEvent>,
    pub accepted: u64,
    pub dropped: u64,
    pub skipped_windows: u64,
    pub failed_clients: usize,
    pub latency: LatencySummary,
    /// Issued student tokens. Kept by the driver only, to check that none of
    /// them leaks onto the instructor channel.
    #[serde(skip)]
    pub tokens: Vec<String>,
}

impl ScenarioSummary {
    pub fn alerts(&self) -> impl Iterator<Item = &WindowEvent> {
        self.events.iter().filter(|e| e.alert)
    }

    pub fn scores(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.score).collect()
    }
}

/// One upload from one student.
#[derive(Debug, Clone)]
pub struct Upload {
    pub send_at_ms: u64,
    pub student: usize,
    pub samples: Vec<[f64; 3]>,
}

fn wire(samples: &[RawSample<f64>]) -> Vec<[f64; 3]> {
    samples.iter().map(|s| [s.t_ms as f64, s.x, s.y]).collect()
}

/// Every student's uploads, per student in send order.
pub fn uploads_per_student(script: &ScenarioScript) -> Result<Vec<Vec<Upload>>, GazeError> {
    Ok(generate_stream::<f64>(script)?
        .into_iter()
        .map(|s| {
            batch_samples(&s.samples, FLUSH_MS, FLUSH_POINTS)
                .into_iter()
                .map(|b| Upload {
                    send_at_ms: b.send_at_ms,
                    student: s.student,
                    samples: wire(&b.samples),
                })
                .collect()
        })
        .collect())
}

/// Lockstep simulation against an in-process [`SessionEngine`].
pub fn run_in_process(
    script: &ScenarioScript,
    cfg: SessionConfig,
    record: Option<RecordWriter>,
) -> Result<ScenarioSummary, DriverError> {
    run_in_process_with_thresholds(script, cfg, record, &[])
}

/// As [`run_in_process`], with the instructor changing the alert threshold
/// at the given session times.
pub fn run_in_process_with_thresholds(
    script: &ScenarioScript,
    cfg: SessionConfig,
    record: Option<RecordWriter>,
    thresholds: &[(u64, f64)],
) -> Result<ScenarioSummary, DriverError> {
    cfg.validate()?;
    let analyzer = Analyzer::new(cfg)?;
    let session = format!("sim-{:016x}", script.seed);
    let mut engine = SessionEngine::new(session.clone(), cfg, "simulated".into(), record);
    let tokens = (0..script.student_count())
        .map(|_| engine.join(0))
        .collect::<Result<Vec<_>, _>>()?;

    let mut uploads: Vec<Upload> = uploads_per_student(script)?.into_iter().flatten().collect();
    uploads.sort_by_key(|u| (u.send_at_ms, u.student));

    let mut events = Vec::new();
    let mut latencies = Vec::new();
    let mut publish = |engine: &mut SessionEngine, now: u64, events: &mut Vec<WindowEvent>| {
        for p in engine.close_due(now) {
            let out = analyzer.process(&p.window);
            latencies.push(out.compute_ms);
            events.push(engine.commit(p.index, &out));
        }
    };
    let mut thresholds = thresholds.to_vec();
    thresholds.sort_by_key(|&(t, _)| t);
    let mut thresholds = thresholds.into_iter().peekable();
    let (mut accepted, mut dropped) = (0, 0);
    for u in &uploads {
        while let Some((t, threshold)) = thresholds.next_if(|&(t, _)| t <= u.send_at_ms) {
            publish(&mut engine, t, &mut events);
            engine.set_threshold(threshold, t)?;
        }
        publish(&mut engine, u.send_at_ms, &mut events);
        let samples: Vec<Value> = StudentMessage::gaze("", &u.samples).into_samples();
        let c = engine.ingest(&tokens[u.student], &samples, u.send_at_ms)?;
        accepted += c.accepted;
        dropped += c.dropped;
    }
    let duration_ms = script.duration_ms();
    publish(&mut engine, duration_ms, &mut events);
    engine.finish(duration_ms, "scenario complete");

    Ok(ScenarioSummary {
        session,
        students: tokens.len(),
        duration_ms,
        events,
        accepted,
        dropped,
        skipped_windows: 0,
        failed_clients: 0,
        latency: LatencySummary::from_samples(&latencies),
        tokens,
    })
}

#[derive(Debug, Clone, Copy, Default)]
struct ClientTally {
    accepted: u64,
    dropped: u64,
}

async fn run_student(
    url: String,
    token: String,
    uploads: Vec<Upload>,
    clock: Arc<ScaledClock>,
) -> Result<ClientTally, DriverError> {
    let (mut ws, _) = tokio_tungstenite::connect_async(&url)
        .await
        .map_err(|e| DriverError::Unreachable {
            url: url.clone(),
            reason: e.to_string(),
        })?;
    let mut tally = ClientTally::default();
    for u in uploads {
        clock.sleep_until(u.send_at_ms).await;
        let frame = serde_json::to_string(&StudentMessage::gaze(token.clone(), &u.samples))
            .map_err(|e| DriverError::Protocol(e.to_string()))?;
        ws.send(Message::Text(frame.into()))
            .await
            .map_err(|e| DriverError::Protocol(e.to_string()))?;
        loop {
            let msg = ws
                .next()
                .await
                .ok_or_else(|| DriverError::Protocol("connection closed before ack".into()))?
                .map_err(|e| DriverError::Protocol(e.to_string()))?;
            let Message::Text(text) = msg else { continue };
            match serde_json::from_str::<StudentReply>(&text) {
                Ok(StudentReply::Ack { accepted, dropped }) => {
                    tally.accepted += accepted;
                    tally.dropped += dropped;
                    break;
                }
                Ok(StudentReply::Error { message }) => return Err(DriverError::Protocol(message)),
                Err(e) => return Err(DriverError::Protocol(e.to_string())),
            }
        }
    }
    let _ = ws.close(None).await;
    Ok(tally)
}

async fn check(resp: reqwest::Response) -> Result<reqwest::Response, DriverError> {
    let status = resp.status();
    if status.is_success() {
        Ok(resp)
    } else {
        Err(DriverError::Http {
            status: status.as_u16(),
            body: resp.text().await.unwrap_or_default(),
        })
    }
}

/// Runs a scenario against a server at `base` (e.g. `http://127.0.0.1:8080`)
/// whose clock runs `time_scale` times faster than wall time. The session
/// config is sent with the create request.
pub async fn run_over_network(
    base: &str,
    script: &ScenarioScript,
    cfg: &SessionConfig,
    time_scale: f64,
) -> Result<ScenarioSummary, DriverError> {
    let base = base.trim_end_matches('/');
    let ws_base = base.replacen("http", "ws", 1);
    let unreachable = |e: reqwest::Error| DriverError::Unreachable {
        url: base.to_owned(),
        reason: e.to_string(),
    };
    let per_student = uploads_per_student(script)?;
    let http = reqwest::Client::new();

    let created: Created = check(http.post(format!("{base}/sessions")).json(cfg).send().await.map_err(unreachable)?)
        .await?
        .json()
        .await
        .map_err(unreachable)?;
    let clock = Arc::new(ScaledClock::new(time_scale));
    let id = created.session.clone();
    let key = created.instructor_key.clone();

    let (instructor, _) = tokio_tungstenite::connect_async(format!("{ws_base}/sessions/{id}/instructor?key={key}"))
        .await
        .map_err(|e| DriverError::Unreachable {
            url: ws_base.clone(),
            reason: e.to_string(),
        })?;
    let (last_end_tx, mut last_end_rx) = tokio::sync::watch::channel(0u64);
    let collector = tokio::spawn(async move {
        let mut events = Vec::new();
        let (_, mut read) = instructor.split();
        while let Some(Ok(msg)) = read.next().await {
            let Message::Text(text) = msg else { continue };
            match serde_json::from_str::<InstructorMessage>(&text) {
                Ok(InstructorMessage::Window(ev)) => {
                    let _ = last_end_tx.send(ev.end_ms);
                    events.push(ev);
                }
                Ok(InstructorMessage::Closed { .. }) => break,
                _ => {}
            }
        }
        events
    });

    let mut tokens = Vec::with_capacity(per_student.len());
    for _ in 0..per_student.len() {
        let joined: Joined = check(http.post(format!("{base}/sessions/{id}/join")).send().await.map_err(unreachable)?)
            .await?
            .json()
            .await
            .map_err(unreachable)?;
        tokens.push(joined.token);
    }

    let clients: Vec<_> = per_student
        .into_iter()
        .zip(&tokens)
        .map(|(uploads, token)| {
            tokio::spawn(run_student(
                format!("{ws_base}/sessions/{id}/student"),
                token.clone(),
                uploads,
                clock.clone(),
            ))
        })
        .collect();
    let total = clients.len();
    let mut tally = ClientTally::default();
    let mut failed = 0;
    for c in clients {
        match c.await {
            Ok(Ok(t)) => {
                tally.accepted += t.accepted;
                tally.dropped += t.dropped;
            }
            Ok(Err(e)) => {
                tracing::warn!(error = %e, "student client failed");
                failed += 1;
            }
            Err(e) => {
                tracing::warn!(error = %e, "student client panicked");
                failed += 1;
            }
        }
    }

    let close = || async {
        check(
            http.post(format!("{base}/sessions/{id}/close"))
                .header(KEY_HEADER, &key)
                .send()
                .await
                .map_err(unreachable)?,
        )
        .await?
        .json::<SessionSummary>()
        .await
        .map_err(unreachable)
    };
    if failed * 2 > total {
        let _ = close().await;
        collector.abort();
        return Err(DriverError::TooManyFailures { failed, total });
    }

    // Wait for the last complete window's event before closing.
    let duration_ms = script.duration_ms();
    let w = cfg.window;
    if duration_ms >= w.window_len_ms {
        let last_end = w.end((duration_ms - w.window_len_ms) / w.stride_ms);
        let grace = Duration::from_secs_f64((2.0 * w.stride_ms as f64 / 1000.0 / time_scale).max(5.0));
        let deadline = tokio::time::Instant::now() + Duration::from_secs_f64(last_end as f64 / 1000.0 / time_scale) + grace;
        let _ = tokio::time::timeout_at(deadline, last_end_rx.wait_for(|&e| e >= last_end)).await;
    }
    let summary = close().await?;
    let events = collector.await.map_err(|e| DriverError::Protocol(e.to_string()))?;

    Ok(ScenarioSummary {
        session: id,
        students: total,
        duration_ms,
        events,
        accepted: tally.accepted,
        dropped: tally.dropped,
        skipped_windows: summary.stats.windows_skipped,
        failed_clients: failed,
        latency: summary.latency,
        tokens,
    })
}
