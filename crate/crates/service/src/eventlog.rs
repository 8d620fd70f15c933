//! Append-only JSON Lines event log.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use proxtrace_core::platform::{Change, ChangeKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event log {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("event log {path}, line {line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogEntry {
    pub sequence: u64,
    pub kind: ChangeKind,
    pub payload: serde_json::Value,
    pub appended_at: i64,
}

impl EventLogEntry {
    pub fn change(&self) -> Result<Change, serde_json::Error> {
        Change::from_parts(self.kind, self.payload.clone())
    }
}

/// What opening the log had to repair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Recovery {
    /// Bytes of a torn trailing line that were cut off.
    pub truncated_bytes: u64,
}

#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    next_sequence: u64,
    sync: bool,
}

impl EventLog {
    /// Opens (or creates) the log and returns every intact entry.
    ///
    /// A trailing line that does not parse is treated as a torn write: it is truncated with
    /// a warning. Damage anywhere before the last line, or a sequence gap, is an error.
    pub fn open(path: impl AsRef<Path>, sync: bool) -> Result<(Self, Vec<EventLogEntry>, Recovery), LogError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| LogError::Io { path: path.clone(), source };
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io_err)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io_err)?;

        let mut entries = Vec::new();
        let mut recovery = Recovery::default();
        let mut offset = 0usize;
        let mut line_no = 0usize;
        while offset < bytes.len() {
            line_no += 1;
            let end = bytes[offset..]
                .iter()
                .position(|&b| b == b'\n')
                .map(|p| offset + p);
            let line = &bytes[offset..end.unwrap_or(bytes.len())];
            let parsed: Result<EventLogEntry, String> =
                serde_json::from_slice(line).map_err(|e| e.to_string());
            let is_last = end.is_none_or(|e| e + 1 >= bytes.len());
            match parsed {
                Ok(entry) => {
                    let expected = entries.len() as u64 + 1;
                    if entry.sequence != expected {
                        return Err(LogError::Corrupt {
                            path,
                            line: line_no,
                            reason: format!("sequence {} where {expected} was expected", entry.sequence),
                        });
                    }
                    entries.push(entry);
                    if end.is_none() {
                        // Complete entry missing its newline.
                        file.write_all(b"\n").map_err(io_err)?;
                    }
                }
                Err(reason) if is_last => {
                    warn!(path = %path.display(), line = line_no, %reason, "truncating torn trailing log entry");
                    recovery.truncated_bytes = (bytes.len() - offset) as u64;
                    file.set_len(offset as u64).map_err(io_err)?;
                    file.seek(SeekFrom::End(0)).map_err(io_err)?;
                    break;
                }
                Err(reason) => {
                    return Err(LogError::Corrupt { path, line: line_no, reason });
                }
            }
            offset = end.map_or(bytes.len(), |e| e + 1);
        }

        let next_sequence = entries.len() as u64 + 1;
        Ok((
            Self {
                path,
                file,
                next_sequence,
                sync,
            },
            entries,
            recovery,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Sequence number the next entry will get.
    pub fn next_sequence(&self) -> u64 {
        self.next_sequence
    }

    /// Writes one entry as a single line. The sequence only advances once the write succeeded.
    pub fn append(&mut self, change: &Change, appended_at: i64) -> Result<EventLogEntry, LogError> {
        let entry = EventLogEntry {
            sequence: self.next_sequence,
            kind: change.kind(),
            payload: change.payload(),
            appended_at,
        };
        let mut line = serde_json::to_vec(&entry).expect("log entries always serialize");
        line.push(b'\n');
        let io_err = |source| LogError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(&line).map_err(io_err)?;
        if self.sync {
            self.file.sync_data().map_err(io_err)?;
        }
        self.next_sequence += 1;
        Ok(entry)
    }
}
