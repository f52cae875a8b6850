//! Directory of recorded completions, one `<digest>.json` file per request.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::request::{CompletionRequest, RequestError};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("replay store I/O at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt replay record {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(format!("unknown mode `{other}` (expected live, record or replay)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Live => "live",
            Mode::Record => "record",
            Mode::Replay => "replay",
        })
    }
}

/// Where a record's response came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordSource {
    Live,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub request_digest: String,
    pub raw_response: String,
    pub created_at: String,
    pub mode: RecordSource,
}

#[derive(Serialize, Deserialize)]
struct RecordFile {
    request: Value,
    response: String,
    created_at: String,
}

#[derive(Debug, Clone)]
pub struct ReplayStore {
    dir: PathBuf,
    write_locks: Arc<Mutex<HashMap<String, Arc<Mutex<()>>>>>,
}

impl ReplayStore {
    pub fn open(dir: impl Into<PathBuf>) -> Self {
        ReplayStore {
            dir: dir.into(),
            write_locks: Arc::default(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    pub fn get(&self, digest: &str) -> Result<Option<CompletionRecord>, StoreError> {
        let path = self.path_for(digest);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        let file: RecordFile = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let stored = CompletionRequest::from_canonical(&file.request).map_err(|e: RequestError| {
            StoreError::Corrupt {
                path: path.clone(),
                reason: e.to_string(),
            }
        })?;
        if stored.digest() != digest {
            return Err(StoreError::Corrupt {
                path,
                reason: "stored request does not hash to the file name".into(),
            });
        }
        Ok(Some(CompletionRecord {
            request_digest: digest.to_string(),
            raw_response: file.response,
            created_at: file.created_at,
            mode: RecordSource::Replay,
        }))
    }

    /// Writes a record atomically. Concurrent writers of the same digest are
    /// serialized; the last one wins.
    pub fn put(
        &self,
        request: &CompletionRequest,
        response: &str,
        created_at: &str,
    ) -> Result<PathBuf, StoreError> {
        let digest = request.digest();
        let lock = {
            let mut locks = self.write_locks.lock().expect("store lock poisoned");
            locks.entry(digest.clone()).or_default().clone()
        };
        let _guard = lock.lock().expect("record lock poisoned");

        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| StoreError::Io { path, source }
        };
        fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        let path = self.path_for(&digest);
        let file = RecordFile {
            request: request.to_canonical(),
            response: response.to_string(),
            created_at: created_at.to_string(),
        };
        let mut body = serde_json::to_string_pretty(&file).expect("record serializes");
        body.push('\n');
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io_err(&self.dir))?;
        tmp.write_all(body.as_bytes()).map_err(io_err(&path))?;
        tmp.persist(&path).map_err(|e| StoreError::Io {
            path: path.clone(),
            source: e.error,
        })?;
        Ok(path)
    }

    /// Digests of every record in the store, sorted.
    pub fn digests(&self) -> Result<Vec<String>, StoreError> {
        let entries = match fs::read_dir(&self.dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => {
                return Err(StoreError::Io {
                    path: self.dir.clone(),
                    source,
                })
            }
        };
        let mut out: Vec<String> = entries
            .filter_map(Result::ok)
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".json").map(str::to_string)
            })
            .collect();
        out.sort();
        Ok(out)
    }
}
