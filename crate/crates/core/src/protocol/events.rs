use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AnnotationRecord, BotStatus, JudgmentTrial, TrialAssignment};

/// Version written into every event line.
pub const EVENT_SCHEMA_VERSION: u32 = 1;

pub const EVENT_LOG_FILE: &str = "events.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventPayload {
    SessionOpened {
        participant_id: String,
        token: String,
        exp1_reviews: Vec<String>,
    },
    BotCheck {
        participant_id: String,
        answer_index: usize,
        status: BotStatus,
    },
    TrialAssigned(TrialAssignment),
    Annotation(AnnotationRecord),
    Judgment(JudgmentTrial),
}

impl EventPayload {
    pub fn participant_id(&self) -> &str {
        match self {
            EventPayload::SessionOpened { participant_id, .. }
            | EventPayload::BotCheck { participant_id, .. } => participant_id,
            EventPayload::TrialAssigned(a) => &a.participant_id,
            EventPayload::Annotation(a) => &a.participant_id,
            EventPayload::Judgment(j) => &j.participant_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentEvent {
    pub schema: u32,
    pub seq: u64,
    pub timestamp_ms: u64,
    pub payload: EventPayload,
}

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("event store unavailable: {0}")]
    Unavailable(String),
    #[error("event log {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("event log {location}: {reason}")]
    Corrupt { location: String, reason: String },
}

impl StorageError {
    /// Whether the caller may retry the same request unchanged.
    pub fn is_retriable(&self) -> bool {
        matches!(self, StorageError::Unavailable(_) | StorageError::Io { .. })
    }
}

/// Durable sink for events; an append either fully succeeds or leaves the
/// service state untouched.
pub trait EventStore: Send {
    fn append(&mut self, event: &ExperimentEvent) -> Result<(), StorageError>;
}

/// In-memory store; can be switched off to exercise storage failures.
#[derive(Debug, Default)]
pub struct MemoryStore {
    pub events: Vec<ExperimentEvent>,
    pub unavailable: bool,
}

impl EventStore for MemoryStore {
    fn append(&mut self, event: &ExperimentEvent) -> Result<(), StorageError> {
        if self.unavailable {
            return Err(StorageError::Unavailable("memory store switched off".into()));
        }
        self.events.push(event.clone());
        Ok(())
    }
}

impl<S: EventStore + ?Sized> EventStore for Box<S> {
    fn append(&mut self, event: &ExperimentEvent) -> Result<(), StorageError> {
        (**self).append(event)
    }
}

/// Append-only record-lines file, one event per line.
#[derive(Debug)]
pub struct FileEventLog {
    path: PathBuf,
    file: File,
}

impl FileEventLog {
    /// Opens (creating if needed) `<dir>/events.jsonl` for appending.
    pub fn open(dir: &Path) -> Result<Self, StorageError> {
        let io = |source| StorageError::Io {
            path: dir.to_path_buf(),
            source,
        };
        fs::create_dir_all(dir).map_err(io)?;
        let path = dir.join(EVENT_LOG_FILE);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        Ok(Self { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl EventStore for FileEventLog {
    fn append(&mut self, event: &ExperimentEvent) -> Result<(), StorageError> {
        let mut line = serde_json::to_vec(event).expect("event serializes");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|()| self.file.flush())
            .map_err(|source| StorageError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

/// Reads every event from `<dir>/events.jsonl` (or the file itself when a
/// file path is given).
pub fn read_event_log(path: &Path) -> Result<Vec<ExperimentEvent>, StorageError> {
    let file_path = if path.is_dir() {
        path.join(EVENT_LOG_FILE)
    } else {
        path.to_path_buf()
    };
    let file = File::open(&file_path).map_err(|source| StorageError::Io {
        path: file_path.clone(),
        source,
    })?;
    let mut events = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| StorageError::Io {
            path: file_path.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let location = format!("{}:{}", file_path.display(), n + 1);
        let event: ExperimentEvent =
            serde_json::from_str(&line).map_err(|e| StorageError::Corrupt {
                location: location.clone(),
                reason: e.to_string(),
            })?;
        if event.schema != EVENT_SCHEMA_VERSION {
            return Err(StorageError::Corrupt {
                location,
                reason: format!("unsupported schema version {}", event.schema),
            });
        }
        events.push(event);
    }
    Ok(events)
}

pub trait Clock: Send {
    fn now_ms(&mut self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&mut self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Deterministic clock advancing by a fixed step per reading.
#[derive(Debug, Clone, Copy)]
pub struct LogicalClock {
    pub next: u64,
    pub step: u64,
}

impl Default for LogicalClock {
    fn default() -> Self {
        Self { next: 0, step: 1000 }
    }
}

impl Clock for LogicalClock {
    fn now_ms(&mut self) -> u64 {
        let now = self.next;
        self.next += self.step;
        now
    }
}
