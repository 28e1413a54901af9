//! Deterministic replay of a session record.
//!
//! Ingest lines are fed back at their recorded arrival times and every
//! window is re-analysed with the header's config. Recorded `window` and
//! `skipped` lines fix which windows were published and in what order
//! relative to threshold changes; the recomputed events are compared field
//! by field against the recorded ones. A record without window lines (a
//! fixture, or an offline capture) is windowed from scratch.

use gazeclass_core::{Distribution, GazeError, GazePoint, StudentRef, WindowAccumulator};
use serde::Serialize;

use crate::pipeline::Analyzer;
use crate::protocol::WindowEvent;
use crate::record::{Record, RecordLine, WindowRecord};
use crate::session::SessionEngine;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub index: u64,
    pub field: &'static str,
    pub recorded: String,
    pub replayed: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayReport {
    pub session: String,
    /// Recomputed events with their window index.
    pub events: Vec<(u64, WindowEvent)>,
    pub recorded_windows: usize,
    pub skipped_windows: u64,
    pub mismatches: Vec<Mismatch>,
    pub corrupt_lines: usize,
    pub closed: bool,
}

impl ReplayReport {
    pub fn matches(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn alerts(&self) -> impl Iterator<Item = &WindowEvent> {
        self.events.iter().map(|(_, e)| e).filter(|e| e.alert)
    }
}

pub fn replay(record: &Record) -> Result<ReplayReport, GazeError> {
    let analyzer = Analyzer::new(record.config)?;
    let mut engine = SessionEngine::new(record.session.clone(), record.config, record.created_at.clone(), None);
    let window_cfg = record.config.window;
    let mut events = Vec::new();
    let mut mismatches = Vec::new();
    let mut recorded_windows = 0;
    let mut close_t = None;

    let publish = |engine: &mut SessionEngine, index: u64, events: &mut Vec<(u64, WindowEvent)>| {
        for p in engine.close_due(window_cfg.end(index)) {
            if p.index == index {
                let ev = engine.commit(p.index, &analyzer.process(&p.window));
                events.push((p.index, ev));
            } else {
                engine.skip(p.index);
            }
        }
    };

    for line in &record.lines {
        match line {
            RecordLine::Join { t_ms, .. } => {
                engine.join_slot(*t_ms);
            }
            RecordLine::Ingest {
                t_ms, student, points, ..
            } => {
                engine.ingest_admitted(StudentRef(*student), points, *t_ms);
            }
            RecordLine::Window(w) => {
                recorded_windows += 1;
                let before = events.len();
                publish(&mut engine, w.index, &mut events);
                match events[before..].last() {
                    Some((_, ev)) => compare(w, ev, &mut mismatches),
                    None => mismatches.push(Mismatch {
                        index: w.index,
                        field: "window",
                        recorded: "published".into(),
                        replayed: "out of order".into(),
                    }),
                }
            }
            RecordLine::Skipped { index, .. } => {
                for p in engine.close_due(window_cfg.end(*index)) {
                    engine.skip(p.index);
                }
            }
            RecordLine::Threshold { t_ms, threshold } => {
                // A recorded threshold passed validation when it was set.
                let _ = engine.set_threshold(*threshold, *t_ms);
            }
            RecordLine::Close { t_ms, .. } => close_t = Some(*t_ms),
            RecordLine::Header { .. } | RecordLine::ReferenceSample { .. } => {}
        }
    }

    if recorded_windows == 0 {
        let pending = match close_t {
            Some(t) => engine.close_due(t),
            None => engine.flush_windows(),
        };
        for p in pending {
            let ev = engine.commit(p.index, &analyzer.process(&p.window));
            events.push((p.index, ev));
        }
    }

    Ok(ReplayReport {
        session: record.session.clone(),
        events,
        recorded_windows,
        skipped_windows: engine.stats().windows_skipped,
        mismatches,
        corrupt_lines: record.corrupt.len(),
        closed: close_t.is_some(),
    })
}

/// Every window of the record rebuilt from its ingest lines, ignoring what
/// was published. Windows run up to the close time, or up to the newest
/// point when the record was never closed.
pub fn windows_of(record: &Record) -> Vec<Distribution> {
    let mut acc = WindowAccumulator::anchored(record.config.window);
    for (t, student, [x, y]) in record.points() {
        acc.push(GazePoint::new(StudentRef(student), t, x, y));
    }
    let close_t = record.lines.iter().rev().find_map(|l| match l {
        RecordLine::Close { t_ms, .. } => Some(*t_ms),
        _ => None,
    });
    match close_t {
        Some(t) => acc.close_until(t),
        None => acc.flush(),
    }
}

fn compare(rec: &WindowRecord, ev: &WindowEvent, out: &mut Vec<Mismatch>) {
    let mut check = |field: &'static str, a: String, b: String| {
        if a != b {
            out.push(Mismatch {
                index: rec.index,
                field,
                recorded: a,
                replayed: b,
            });
        }
    };
    check("start_ms", rec.start_ms.to_string(), ev.start_ms.to_string());
    check("score", rec.score.to_string(), ev.score.to_string());
    check("n_points", rec.n_points.to_string(), ev.n_points.to_string());
    check("n_clusters", rec.n_clusters.to_string(), ev.n_clusters.to_string());
    check("alert", rec.alert.to_string(), ev.alert.to_string());
    check("degraded", rec.degraded.to_string(), ev.degraded.to_string());
    if rec.heatmap != ev.heatmap {
        check("heatmap", "recorded grid".into(), "different grid".into());
    }
}
