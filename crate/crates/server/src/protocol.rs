//! Wire messages. Every frame is one UTF-8 JSON object with a `type` tag.
//!
//! ```text
//! student -> server     {"type":"gaze","token":"...","samples":[[t_ms,x,y],...]}
//! server  -> student    {"type":"ack","accepted":n,"dropped":n}
//! server  -> instructor {"type":"window","session":"...","start_ms":n,"end_ms":n,
//!                        "score":f,"n_points":n,"n_clusters":n,
//!                        "heatmap":{"rows":32,"cols":32,"counts":[...]},"alert":b}
//! instructor -> server  {"type":"set_threshold","threshold":f}
//! server -> instructor  {"type":"threshold","threshold":f,"accepted":b}
//! ```
//!
//! Samples are kept as raw JSON values until admission so one malformed
//! sample only drops itself.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StudentMessage {
    Gaze { token: String, samples: Vec<Value> },
}

impl StudentMessage {
    pub fn gaze(token: impl Into<String>, samples: &[[f64; 3]]) -> Self {
        StudentMessage::Gaze {
            token: token.into(),
            samples: samples
                .iter()
                .map(|s| Value::from(s.iter().map(|&v| sample_value(v)).collect::<Vec<_>>()))
                .collect(),
        }
    }
}

impl StudentMessage {
    pub fn into_samples(self) -> Vec<Value> {
        let StudentMessage::Gaze { samples, .. } = self;
        samples
    }
}

fn sample_value(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        Value::from(v as i64)
    } else {
        serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
    }
}

/// `[t_ms, x, y]` from a wire sample. Missing or non-numeric entries become
/// NaN so admission drops them.
pub fn parse_sample(v: &Value) -> [f64; 3] {
    let get = |i: usize| {
        v.as_array()
            .and_then(|a| a.get(i))
            .and_then(Value::as_f64)
            .unwrap_or(f64::NAN)
    };
    [get(0), get(1), get(2)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StudentReply {
    Ack { accepted: u64, dropped: u64 },
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapWire {
    pub rows: usize,
    pub cols: usize,
    pub counts: Vec<u32>,
}

/// Aggregate result for one window. Carries no per-student data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEvent {
    pub session: String,
    pub start_ms: u64,
    pub end_ms: u64,
    pub score: f64,
    pub n_points: usize,
    pub n_clusters: usize,
    pub heatmap: HeatmapWire,
    pub alert: bool,
    /// Set when scoring failed and the score was forced to 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InstructorMessage {
    Window(WindowEvent),
    Threshold {
        threshold: f64,
        accepted: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    Closed { session: String },
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InstructorCommand {
    SetThreshold { threshold: f64 },
}
