//! Append-only JSONL event trace, one file per context.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed trace line {line} in {path}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// One trace record. `ts` is a logical tick under deterministic runs and
/// unix milliseconds otherwise; `payload_hash` is the SHA-256 of the
/// canonical payload JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub iteration: u32,
    pub ts: u64,
    pub event: String,
    pub payload: Value,
    pub payload_hash: String,
}

pub fn payload_hash(payload: &Value) -> String {
    let canonical = serde_json::to_string(payload).expect("payload serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Buffered writer: events accumulate in memory and hit disk only at
/// `flush`, so a crash mid-iteration never leaves a partial iteration
/// in the file.
pub struct TraceWriter {
    path: PathBuf,
    deterministic: bool,
    next_seq: u64,
    pending: Vec<TraceEvent>,
}

impl TraceWriter {
    pub fn new(path: impl Into<PathBuf>, deterministic: bool, next_seq: u64) -> Self {
        TraceWriter {
            path: path.into(),
            deterministic,
            next_seq,
            pending: Vec::new(),
        }
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn record(&mut self, iteration: u32, event: &str, payload: Value) {
        let ts = if self.deterministic {
            self.next_seq
        } else {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0)
        };
        let hash = payload_hash(&payload);
        self.pending.push(TraceEvent {
            seq: self.next_seq,
            iteration,
            ts,
            event: event.to_string(),
            payload,
            payload_hash: hash,
        });
        self.next_seq += 1;
    }

    pub fn flush(&mut self) -> Result<(), TraceError> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let io = |source| TraceError::Io {
            path: self.path.clone(),
            source,
        };
        if let Some(parent) = self.path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(io)?;
        for event in self.pending.drain(..) {
            let line = serde_json::to_string(&event).expect("event serializes");
            writeln!(file, "{line}").map_err(io)?;
        }
        file.sync_all().map_err(io)?;
        Ok(())
    }
}

/// Reads a whole trace file.
pub fn read_trace(path: &Path) -> Result<Vec<TraceEvent>, TraceError> {
    let file = File::open(path).map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut events = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| TraceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let event: TraceEvent =
            serde_json::from_str(&line).map_err(|e| TraceError::Malformed {
                path: path.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        events.push(event);
    }
    Ok(events)
}

/// Drops any events beyond the last completed iteration (recovery after
/// a crash that outran the checkpoint) and returns the next sequence
/// number to continue from.
pub fn truncate_to_iteration(path: &Path, last_completed: u32) -> Result<u64, TraceError> {
    if !path.exists() {
        return Ok(0);
    }
    let events = read_trace(path)?;
    let kept: Vec<&TraceEvent> = events
        .iter()
        .filter(|e| e.iteration <= last_completed)
        .collect();
    let next_seq = kept.iter().map(|e| e.seq + 1).max().unwrap_or(0);
    if kept.len() != events.len() {
        let io = |source| TraceError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut file = File::create(path).map_err(io)?;
        for event in &kept {
            let line = serde_json::to_string(event).expect("event serializes");
            writeln!(file, "{line}").map_err(io)?;
        }
        file.sync_all().map_err(io)?;
    }
    Ok(next_seq)
}
