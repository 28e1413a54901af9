//! Append-only session record: newline-delimited JSON, one object per line.
//!
//! | `type`             | fields                                                        |
//! |--------------------|---------------------------------------------------------------|
//! | `header`           | `version`, `session`, `created_at` (wall clock), `config`     |
//! | `join`             | `t_ms`, `student` (roster slot, never the token)              |
//! | `ingest`           | `t_ms` (arrival), `student`, `points` (admitted `[x,y]`), `dropped` |
//! | `window`           | `index`, `start_ms`, `end_ms`, `score`, `n_points`, `n_clusters`, `alert`, `degraded`, `heatmap` |
//! | `skipped`          | `index`, `start_ms`, `end_ms`                                 |
//! | `threshold`        | `t_ms`, `threshold`                                           |
//! | `reference_sample` | `points`: the uniform sample a fixture was scored against     |
//! | `close`            | `t_ms`, `reason`                                              |
//!
//! The header is always first. Times are session milliseconds. Floats are
//! written in shortest round-trip form, so replay sees bit-identical values.
//! `created_at` is the only wall-clock field.

use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::SessionConfig;
use crate::protocol::HeatmapWire;

pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RecordLine {
    Header {
        version: u32,
        session: String,
        created_at: String,
        config: SessionConfig,
    },
    Join {
        t_ms: u64,
        student: u32,
    },
    Ingest {
        t_ms: u64,
        student: u32,
        points: Vec<[f64; 2]>,
        dropped: u64,
    },
    Window(WindowRecord),
    Skipped {
        index: u64,
        start_ms: u64,
        end_ms: u64,
    },
    Threshold {
        t_ms: u64,
        threshold: f64,
    },
    ReferenceSample {
        points: Vec<[f64; 2]>,
    },
    Close {
        t_ms: u64,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub index: u64,
    pub start_ms: u64,
    pub end_ms: u64,
    pub score: f64,
    pub n_points: usize,
    pub n_clusters: usize,
    pub alert: bool,
    pub degraded: bool,
    pub heatmap: HeatmapWire,
}

pub struct RecordWriter {
    out: Box<dyn Write + Send>,
}

impl std::fmt::Debug for RecordWriter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("RecordWriter")
    }
}

impl RecordWriter {
    pub fn new(out: impl Write + Send + 'static) -> Self {
        Self { out: Box::new(out) }
    }

    pub fn create(path: &Path) -> io::Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self::new(BufWriter::new(File::create(path)?)))
    }

    /// Appends one line. Window and close lines are flushed immediately so
    /// a crash loses at most the ingest lines of the open windows.
    pub fn append(&mut self, line: &RecordLine) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, line)?;
        self.out.write_all(b"\n")?;
        if matches!(line, RecordLine::Window(_) | RecordLine::Close { .. } | RecordLine::Header { .. }) {
            self.out.flush()?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

/// In-memory sink, for simulations that keep their record.
#[derive(Debug, Clone, Default)]
pub struct SharedBuffer(std::sync::Arc<parking_lot::Mutex<Vec<u8>>>);

impl SharedBuffer {
    pub fn contents(&self) -> Vec<u8> {
        self.0.lock().clone()
    }
}

impl Write for SharedBuffer {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.lock().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("cannot read record: {0}")]
    Io(#[from] io::Error),
    #[error("record has no header line")]
    MissingHeader,
    #[error("unsupported record version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptLine {
    pub line_no: usize,
    pub error: String,
}

/// A parsed record. Lines that fail to parse are skipped and listed in
/// `corrupt`.
#[derive(Debug, Clone)]
pub struct Record {
    pub session: String,
    pub created_at: String,
    pub config: SessionConfig,
    /// Every line after the header, in file order.
    pub lines: Vec<RecordLine>,
    pub corrupt: Vec<CorruptLine>,
}

impl Record {
    pub fn read(reader: impl BufRead) -> Result<Self, RecordError> {
        let mut header = None;
        let mut lines = Vec::new();
        let mut corrupt = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<RecordLine>(&line) {
                Ok(RecordLine::Header {
                    version,
                    session,
                    created_at,
                    config,
                }) if header.is_none() => {
                    if version != RECORD_VERSION {
                        return Err(RecordError::Version(version));
                    }
                    header = Some((session, created_at, config));
                }
                Ok(RecordLine::Header { .. }) => corrupt.push(CorruptLine {
                    line_no: i + 1,
                    error: "duplicate header".into(),
                }),
                Ok(l) if header.is_some() => lines.push(l),
                Ok(_) => return Err(RecordError::MissingHeader),
                Err(e) => corrupt.push(CorruptLine {
                    line_no: i + 1,
                    error: e.to_string(),
                }),
            }
        }
        let (session, created_at, config) = header.ok_or(RecordError::MissingHeader)?;
        Ok(Self {
            session,
            created_at,
            config,
            lines,
            corrupt,
        })
    }

    pub fn open(path: &Path) -> Result<Self, RecordError> {
        Self::read(io::BufReader::new(File::open(path)?))
    }

    /// Every admitted point in arrival order, as `(t_ms, [x, y])`.
    pub fn points(&self) -> impl Iterator<Item = (u64, u32, [f64; 2])> + '_ {
        self.lines.iter().flat_map(|l| match l {
            RecordLine::Ingest {
                t_ms, student, points, ..
            } => points.iter().map(|&p| (*t_ms, *student, p)).collect::<Vec<_>>(),
            _ => Vec::new(),
        })
    }

    pub fn windows(&self) -> impl Iterator<Item = &WindowRecord> {
        self.lines.iter().filter_map(|l| match l {
            RecordLine::Window(w) => Some(w),
            _ => None,
        })
    }

    pub fn reference_sample(&self) -> Option<&[[f64; 2]]> {
        self.lines.iter().find_map(|l| match l {
            RecordLine::ReferenceSample { points } => Some(points.as_slice()),
            _ => None,
        })
    }

    pub fn close_line(&self) -> Option<&RecordLine> {
        self.lines.last().filter(|l| matches!(l, RecordLine::Close { .. }))
    }
}
