//! Append-only label log. Each accepted label is one JSON line, flushed and
//! synced to disk before the submission is acknowledged; the log is replayed
//! on startup.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::ReviewError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    pub label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
    pub labeled_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Submission {
    /// Newly stored.
    Stored(LabelRecord),
    /// Identical label already on file; nothing written.
    Unchanged(LabelRecord),
}

impl Submission {
    pub fn record(&self) -> &LabelRecord {
        match self {
            Submission::Stored(r) | Submission::Unchanged(r) => r,
        }
    }
}

#[derive(Debug)]
pub struct LabelStore {
    path: PathBuf,
    file: File,
    labels: BTreeMap<String, LabelRecord>,
}

impl LabelStore {
    /// Opens (creating if needed) the log at `path` and replays it. A final
    /// line without a trailing newline is an interrupted write and is
    /// dropped; any other malformed line is an error.
    pub fn open(path: &Path) -> Result<Self, ReviewError> {
        let io = |source| ReviewError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut labels = BTreeMap::new();
        let mut valid_len = 0u64;
        if path.exists() {
            let mut reader = BufReader::new(File::open(path).map_err(io)?);
            let mut line = String::new();
            let mut line_no = 0;
            loop {
                line.clear();
                let n = reader.read_line(&mut line).map_err(io)?;
                if n == 0 {
                    break;
                }
                line_no += 1;
                if !line.ends_with('\n') {
                    log::warn!("{}: dropping incomplete final line {line_no}", path.display());
                    break;
                }
                valid_len += n as u64;
                if line.trim().is_empty() {
                    continue;
                }
                let record: LabelRecord = serde_json::from_str(&line)
                    .map_err(|e| ReviewError::CorruptLog(format!("{}:{line_no}: {e}", path.display())))?;
                // the first label for an id wins; later ones were never acknowledged
                labels.entry(record.id.clone()).or_insert(record);
            }
        } else if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        // cut off a torn tail so the next append starts on a fresh line
        if file.metadata().map_err(io)?.len() > valid_len {
            file.set_len(valid_len).map_err(io)?;
        }
        Ok(LabelStore {
            path: path.to_path_buf(),
            file,
            labels,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, id: &str) -> Option<&LabelRecord> {
        self.labels.get(id)
    }

    pub fn labels(&self) -> &BTreeMap<String, LabelRecord> {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Stores `record` unless its id is already labeled. Resubmitting the
    /// same label is a no-op; a different label is a conflict.
    pub fn submit(&mut self, record: LabelRecord) -> Result<Submission, ReviewError> {
        if record.label > 1 {
            return Err(ReviewError::InvalidLabel(record.label));
        }
        if let Some(existing) = self.labels.get(&record.id) {
            return if existing.label == record.label {
                Ok(Submission::Unchanged(existing.clone()))
            } else {
                Err(ReviewError::Conflict {
                    id: record.id,
                    stored: existing.label,
                })
            };
        }
        let mut line = serde_json::to_string(&record).expect("label record serializes");
        line.push('\n');
        let io = |source| ReviewError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(line.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)?;
        self.labels.insert(record.id.clone(), record.clone());
        Ok(Submission::Stored(record))
    }
}
