//! Oracle transcripts: record every provider call to JSONL, then replay the
//! file as a provider of its own. A recorded run can be re-executed offline
//! and must follow the exact same call sequence — each replayed call checks
//! the query kind and a digest of the prompt (or embedded text) against the
//! recording and fails loudly on divergence.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::hash::digest_hex;
use crate::oracle::{OracleError, OracleProvider, OracleQuery};

const FORMAT_VERSION: u32 = 1;
const EMBED_KIND: &str = "embed";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    stream: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct Entry {
    kind: String,
    digest: String,
    payload: String,
}

/// Wraps a provider and records every call in order.
pub struct RecordingOracle {
    inner: Arc<dyn OracleProvider>,
    entries: Mutex<Vec<Entry>>,
}

impl RecordingOracle {
    pub fn new(inner: Arc<dyn OracleProvider>) -> Self {
        RecordingOracle {
            inner,
            entries: Mutex::new(Vec::new()),
        }
    }

    /// Writes the transcript atomically (temp file + rename).
    pub fn save(&self, path: &Path) -> Result<(), OracleError> {
        let mut out = serde_json::to_string(&Header {
            format_version: FORMAT_VERSION,
            stream: "oracle_transcript".to_string(),
        })
        .expect("header serializes");
        out.push('\n');
        for entry in self.entries.lock().expect("recorder poisoned").iter() {
            out.push_str(&serde_json::to_string(entry).expect("entry serializes"));
            out.push('\n');
        }
        let tmp: PathBuf = path.with_extension("tmp");
        std::fs::write(&tmp, out)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn recorded_calls(&self) -> usize {
        self.entries.lock().expect("recorder poisoned").len()
    }
}

impl OracleProvider for RecordingOracle {
    fn embed(&self, text: &str) -> Result<Vec<f32>, OracleError> {
        let v = self.inner.embed(text)?;
        self.entries.lock().expect("recorder poisoned").push(Entry {
            kind: EMBED_KIND.to_string(),
            digest: digest_hex(text.as_bytes()),
            payload: serde_json::to_string(&v).expect("vector serializes"),
        });
        Ok(v)
    }

    fn respond(&self, query: &OracleQuery) -> Result<String, OracleError> {
        let reply = self.inner.respond(query)?;
        self.entries.lock().expect("recorder poisoned").push(Entry {
            kind: query.kind.as_str().to_string(),
            digest: digest_hex(query.prompt.as_bytes()),
            payload: reply.clone(),
        });
        Ok(reply)
    }
}

/// Replays a recorded transcript; calls must arrive in recorded order.
#[derive(Debug)]
pub struct ReplayOracle {
    file: String,
    entries: Vec<Entry>,
    cursor: Mutex<usize>,
}

impl ReplayOracle {
    pub fn load(path: &Path) -> Result<Self, OracleError> {
        let file = path.display().to_string();
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        let (_, header_line) = lines.next().ok_or_else(|| OracleError::Transcript {
            file: file.clone(),
            line: 1,
            detail: "empty transcript".to_string(),
        })?;
        let header: Header =
            serde_json::from_str(header_line).map_err(|e| OracleError::Transcript {
                file: file.clone(),
                line: 1,
                detail: format!("bad header: {e}"),
            })?;
        if header.format_version != FORMAT_VERSION {
            return Err(OracleError::Transcript {
                file,
                line: 1,
                detail: format!("unsupported format_version {}", header.format_version),
            });
        }
        let mut entries = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let entry: Entry = serde_json::from_str(line).map_err(|e| OracleError::Transcript {
                file: file.clone(),
                line: idx + 1,
                detail: format!("bad entry: {e}"),
            })?;
            entries.push(entry);
        }
        Ok(ReplayOracle {
            file,
            entries,
            cursor: Mutex::new(0),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries not yet consumed by replayed calls.
    pub fn remaining(&self) -> usize {
        self.entries.len() - *self.cursor.lock().expect("replay poisoned")
    }

    fn next(&self, kind: &str, digest: &str) -> Result<Entry, OracleError> {
        let mut cursor = self.cursor.lock().expect("replay poisoned");
        let line = *cursor + 2; // 1-based, after the header line
        let entry = self
            .entries
            .get(*cursor)
            .cloned()
            .ok_or_else(|| OracleError::Transcript {
                file: self.file.clone(),
                line,
                detail: format!("transcript exhausted; expected a '{kind}' call"),
            })?;
        if entry.kind != kind {
            return Err(OracleError::Transcript {
                file: self.file.clone(),
                line,
                detail: format!("call kind mismatch: recorded '{}', got '{kind}'", entry.kind),
            });
        }
        if entry.digest != digest {
            return Err(OracleError::Transcript {
                file: self.file.clone(),
                line,
                detail: format!(
                    "prompt digest mismatch: recorded {}, got {digest}",
                    entry.digest
                ),
            });
        }
        *cursor += 1;
        Ok(entry)
    }
}

impl OracleProvider for ReplayOracle {
    fn embed(&self, text: &str) -> Result<Vec<f32>, OracleError> {
        let entry = self.next(EMBED_KIND, &digest_hex(text.as_bytes()))?;
        serde_json::from_str(&entry.payload).map_err(|e| OracleError::Transcript {
            file: self.file.clone(),
            line: 0,
            detail: format!("bad embedding payload: {e}"),
        })
    }

    fn respond(&self, query: &OracleQuery) -> Result<String, OracleError> {
        let entry = self.next(
            query.kind.as_str(),
            &digest_hex(query.prompt.as_bytes()),
        )?;
        Ok(entry.payload)
    }
}
