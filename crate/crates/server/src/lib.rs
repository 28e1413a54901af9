//! Session service for class-wide gaze attention: ingestion over
//! WebSockets, sliding-window scoring, instructor fan-out, and an
//! append-only record that replays deterministically.

pub mod clock;
pub mod config;
pub mod driver;
pub mod http;
pub mod pipeline;
pub mod protocol;
pub mod record;
pub mod replay;
pub mod service;
pub mod session;

pub use clock::{Clock, ManualClock, ScaledClock};
pub use config::{ConfigError, ServerConfig, SessionConfig};
pub use pipeline::{Analyzer, WindowOutcome};
pub use protocol::{InstructorMessage, StudentMessage, StudentReply, WindowEvent};
pub use record::{Record, RecordLine, RecordWriter};
pub use replay::{replay, ReplayReport};
pub use service::{Service, SessionHandle, SessionSummary};
pub use session::{SessionEngine, SessionError};
