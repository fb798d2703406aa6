//! Append-only NDJSON event log, deterministic replay and debrief queries.
//!
//! The first line of a log is a [`LogHeader`]; every following line is one
//! [`LogEvent`]. Only commands that changed (or could change) state are
//! logged, plus phase transitions, team finishes and periodic checkpoint
//! hashes. Positions are never logged; they are reconstructed by replay.

mod debrief;
mod replay;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ClientId, TeamId};
use crate::scenario::HuntConfig;
use crate::session::{Command, Phase, Session};

pub use debrief::{
    CursorHunter, CursorState, Debrief, DebriefError, FinishMarker, FloorPolyline, HunterPath,
    ScreenshotMarker, Timeline, TrackSample,
};
pub use replay::{replay, replay_with, ReplayError, Replayed};

pub const LOG_VERSION: u32 = 1;
/// Checkpoint cadence while hunting.
pub const CHECKPOINT_EVERY: u64 = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub version: u32,
    pub building_id: String,
    pub building_digest: String,
    pub scenario: HuntConfig,
    pub seed: u64,
    /// Wall-clock start, milliseconds since the Unix epoch.
    pub started_at: u64,
}

impl LogHeader {
    /// Header for a log that starts with a freshly created `session`.
    pub fn for_session(session: &Session, started_at: u64) -> LogHeader {
        let building = session.building();
        LogHeader {
            version: LOG_VERSION,
            building_id: building.id.clone(),
            building_digest: building.digest().to_owned(),
            scenario: session.scenario().config().clone(),
            seed: session.seed(),
            started_at,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    /// Applied immediately, outside the tick loop.
    Cmd { client: ClientId, command: Command },
    /// Applied inside the step that produced `tick`, in log order.
    TickCmd { client: ClientId, command: Command },
    Phase { phase: Phase },
    Finish { team: TeamId, finish_tick: u64, seconds: f64 },
    Checkpoint { hash: String },
    End { hash: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub tick: u64,
    pub seq: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event at tick {tick} after tick {last}")]
    OutOfOrder { tick: u64, last: u64 },
    #[error("log sink failed: {0}")]
    Sink(#[from] std::io::Error),
    #[error("corrupt log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
}

impl LogError {
    pub fn code(&self) -> &'static str {
        match self {
            LogError::OutOfOrder { .. } => "OutOfOrder",
            LogError::Sink(_) => "SinkError",
            LogError::CorruptLog { .. } => "CorruptLog",
        }
    }
}

/// In-memory log, optionally mirrored line by line to a sink.
pub struct EventLog {
    header: LogHeader,
    events: Vec<LogEvent>,
    sink: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for EventLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventLog")
            .field("header", &self.header)
            .field("events", &self.events.len())
            .field("sink", &self.sink.is_some())
            .finish()
    }
}

impl Clone for EventLog {
    /// Clones drop the sink.
    fn clone(&self) -> Self {
        EventLog {
            header: self.header.clone(),
            events: self.events.clone(),
            sink: None,
        }
    }
}

impl PartialEq for EventLog {
    fn eq(&self, other: &Self) -> bool {
        self.header == other.header && self.events == other.events
    }
}

impl EventLog {
    pub fn new(header: LogHeader) -> EventLog {
        EventLog {
            header,
            events: Vec::new(),
            sink: None,
        }
    }

    /// Create `path` and mirror every appended event into it.
    pub fn create(path: &Path, header: LogHeader) -> Result<EventLog, LogError> {
        let file = File::create(path)?;
        EventLog::with_sink(header, Box::new(BufWriter::new(file)))
    }

    pub fn with_sink(header: LogHeader, mut sink: Box<dyn Write + Send>) -> Result<EventLog, LogError> {
        write_line(&mut sink, &header)?;
        Ok(EventLog {
            header,
            events: Vec::new(),
            sink: Some(sink),
        })
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn events(&self) -> &[LogEvent] {
        &self.events
    }

    pub fn last_tick(&self) -> u64 {
        self.events.last().map(|e| e.tick).unwrap_or(0)
    }

    pub fn append(&mut self, tick: u64, kind: EventKind) -> Result<&LogEvent, LogError> {
        let last = self.last_tick();
        if tick < last {
            return Err(LogError::OutOfOrder { tick, last });
        }
        let seq = self.events.last().map(|e| e.seq + 1).unwrap_or(1);
        let event = LogEvent { tick, seq, kind };
        if let Some(sink) = self.sink.as_mut() {
            write_line(sink, &event)?;
            sink.flush()?;
        }
        self.events.push(event);
        Ok(self.events.last().expect("just pushed"))
    }

    pub fn flush(&mut self) -> Result<(), LogError> {
        if let Some(sink) = self.sink.as_mut() {
            sink.flush()?;
        }
        Ok(())
    }

    /// Write the whole log to `w` in NDJSON form.
    pub fn write_to(&self, w: &mut dyn Write) -> Result<(), LogError> {
        write_line(w, &self.header)?;
        for e in &self.events {
            write_line(w, e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn save(&self, path: &Path) -> Result<(), LogError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)
    }

    /// Parse an NDJSON log. A missing trailing newline is treated as a
    /// truncated write.
    pub fn parse(text: &str) -> Result<EventLog, LogError> {
        let corrupt = |line: usize, reason: String| LogError::CorruptLog { line, reason };
        if text.is_empty() {
            return Err(corrupt(1, "empty log".into()));
        }
        if !text.ends_with('\n') {
            let line = text.lines().count();
            return Err(corrupt(line, "truncated line".into()));
        }
        let mut lines = text.lines();
        let header: LogHeader = serde_json::from_str(lines.next().unwrap_or_default())
            .map_err(|e| corrupt(1, e.to_string()))?;
        if header.version != LOG_VERSION {
            return Err(corrupt(1, format!("unsupported log version {}", header.version)));
        }
        let mut events: Vec<LogEvent> = Vec::new();
        for (i, line) in lines.enumerate() {
            let n = i + 2;
            let e: LogEvent = serde_json::from_str(line).map_err(|e| corrupt(n, e.to_string()))?;
            if let Some(prev) = events.last() {
                if e.tick < prev.tick || e.seq <= prev.seq {
                    return Err(corrupt(n, "(tick, seq) not increasing".into()));
                }
            }
            events.push(e);
        }
        Ok(EventLog {
            header,
            events,
            sink: None,
        })
    }

    pub fn load(path: &Path) -> Result<EventLog, LogError> {
        let bytes = std::fs::read(path)?;
        let text = String::from_utf8(bytes).map_err(|e| LogError::CorruptLog {
            line: 0,
            reason: e.to_string(),
        })?;
        EventLog::parse(&text)
    }
}

fn write_line<T: Serialize>(w: &mut dyn Write, value: &T) -> Result<(), LogError> {
    let mut line = serde_json::to_vec(value).expect("log entries serialize");
    line.push(b'\n');
    w.write_all(&line)?;
    Ok(())
}
