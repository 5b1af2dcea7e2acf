//! Append-only score cache: one JSON record per line, each carrying a
//! checksum over its own canonical serialisation. Loading keeps the last
//! valid record per task key, so an interrupted run resumes from whatever was
//! flushed. A truncated final line (no trailing newline) is tolerated as an
//! interrupted write; any other unreadable record is an error naming the line
//! and key rather than a silent skip.
//!
//! One logical writer per cache file: the in-process lock serialises writers
//! inside a run, and concurrent pipeline processes must not share a cache.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use tcmap_core::ingest::TaskKey;
use tcmap_core::schema::TaskScore;

use crate::error::{PipelineError, Result};

pub trait ScoreCache: Send + Sync {
    fn get(&self, key: &TaskKey) -> Option<TaskScore>;
    /// Persist before the caller may treat the score as included.
    fn put(&self, score: &TaskScore) -> Result<()>;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Canonical record text: the score as a JSON object with sorted keys.
fn canonical_record(score: &TaskScore) -> Result<String> {
    serde_json::to_value(score)
        .and_then(|v| serde_json::to_string(&v))
        .map_err(|e| PipelineError::data(format!("cannot serialise score record: {e}")))
}

fn encode_line(score: &TaskScore) -> Result<String> {
    let canonical = canonical_record(score)?;
    let checksum = sha256_hex(canonical.as_bytes());
    let mut value: serde_json::Value = serde_json::from_str(&canonical)
        .map_err(|e| PipelineError::data(format!("cannot re-parse score record: {e}")))?;
    value
        .as_object_mut()
        .expect("score records are objects")
        .insert("checksum".to_string(), serde_json::Value::String(checksum));
    serde_json::to_string(&value)
        .map_err(|e| PipelineError::data(format!("cannot serialise cache line: {e}")))
}

fn decode_line(line: &str) -> std::result::Result<TaskScore, String> {
    let mut value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| format!("not JSON: {e}"))?;
    let object = value.as_object_mut().ok_or("not a JSON object")?;
    let checksum = object
        .remove("checksum")
        .and_then(|v| v.as_str().map(str::to_string))
        .ok_or("missing checksum field")?;
    let canonical = serde_json::to_string(&value).map_err(|e| format!("{e}"))?;
    if sha256_hex(canonical.as_bytes()) != checksum {
        let key = value
            .get("task_key")
            .and_then(|k| k.as_str())
            .unwrap_or("<unknown>");
        return Err(format!("checksum mismatch for task key {key}"));
    }
    serde_json::from_value(value).map_err(|e| format!("record does not match schema: {e}"))
}

#[derive(Debug)]
pub struct FileCache {
    inner: Mutex<FileCacheInner>,
    path: PathBuf,
    /// True when the load tolerated a truncated final line.
    truncated_tail: bool,
}

#[derive(Debug)]
struct FileCacheInner {
    map: BTreeMap<TaskKey, TaskScore>,
    file: File,
}

impl FileCache {
    /// Open (creating if absent) and load every record.
    pub fn open(path: &Path) -> Result<FileCache> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)
                    .map_err(|e| PipelineError::io("cannot create cache directory", parent, e))?;
            }
        }
        let content = match std::fs::read_to_string(path) {
            Ok(content) => content,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(PipelineError::io("cannot read cache", path, e)),
        };

        let mut map = BTreeMap::new();
        let mut truncated_tail = false;
        let ends_complete = content.is_empty() || content.ends_with('\n');
        let lines: Vec<&str> = content.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match decode_line(line) {
                Ok(score) => {
                    map.insert(score.task_key.clone(), score);
                }
                Err(message) => {
                    let is_unterminated_last = i + 1 == lines.len() && !ends_complete;
                    if is_unterminated_last {
                        truncated_tail = true;
                    } else {
                        return Err(PipelineError::data(format!(
                            "cache {} line {}: unreadable record ({message})",
                            path.display(),
                            i + 1
                        )));
                    }
                }
            }
        }

        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| PipelineError::io("cannot open cache for append", path, e))?;
        Ok(FileCache {
            inner: Mutex::new(FileCacheInner { map, file }),
            path: path.to_path_buf(),
            truncated_tail,
        })
    }

    pub fn truncated_tail(&self) -> bool {
        self.truncated_tail
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl ScoreCache for FileCache {
    fn get(&self, key: &TaskKey) -> Option<TaskScore> {
        self.inner.lock().unwrap().map.get(key).cloned()
    }

    fn put(&self, score: &TaskScore) -> Result<()> {
        let line = encode_line(score)?;
        let mut inner = self.inner.lock().unwrap();
        // A record interrupted mid-write must not corrupt the previous one,
        // so start on a fresh line before flushing the whole record.
        inner
            .file
            .write_all(line.as_bytes())
            .and_then(|_| inner.file.write_all(b"\n"))
            .and_then(|_| inner.file.flush())
            .map_err(|e| PipelineError::io("cannot append to cache", &self.path, e))?;
        inner.map.insert(score.task_key.clone(), score.clone());
        Ok(())
    }

    fn len(&self) -> usize {
        self.inner.lock().unwrap().map.len()
    }
}

/// In-memory cache for tests and one-shot runs.
#[derive(Default)]
pub struct MemoryCache {
    map: Mutex<BTreeMap<TaskKey, TaskScore>>,
}

impl ScoreCache for MemoryCache {
    fn get(&self, key: &TaskKey) -> Option<TaskScore> {
        self.map.lock().unwrap().get(key).cloned()
    }

    fn put(&self, score: &TaskScore) -> Result<()> {
        self.map
            .lock()
            .unwrap()
            .insert(score.task_key.clone(), score.clone());
        Ok(())
    }

    fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }
}
