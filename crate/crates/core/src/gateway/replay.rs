//! Deterministic replay of recorded model responses.
//!
//! A replay store is a directory of JSON-lines files (`*.jsonl`). Each line
//! is one [`ReplayRecord`] keyed by [`request_digest`], a stable hash of the
//! model id and the full message list.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_128;

use super::{Backend, BackendError, BackendReply, ChatMessage, ChatRequest, ModelSpec};

/// Default file name used when recording into a store directory.
pub const RECORDS_FILE: &str = "records.jsonl";

pub fn request_digest(request: &ChatRequest) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        model_id: &'a str,
        messages: &'a [ChatMessage],
    }
    let key = serde_json::to_vec(&Key {
        model_id: &request.model_id,
        messages: &request.messages,
    })
    .expect("request key serializes");
    format!("{:032x}", xxh3_128(&key))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub digest: String,
    pub model_id: String,
    pub response: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<Decimal>,
}

impl ReplayRecord {
    pub fn new(request: &ChatRequest, reply: &BackendReply) -> Self {
        Self {
            digest: request_digest(request),
            model_id: request.model_id.clone(),
            response: reply.text.clone(),
            prompt_tokens: reply.prompt_tokens,
            completion_tokens: reply.completion_tokens,
            cost: reply.reported_cost,
        }
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("replay store {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("replay record {path}:{line}: {source}")]
    Json {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Default)]
pub struct ReplayStore {
    records: HashMap<String, ReplayRecord>,
}

impl ReplayStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads every `*.jsonl` file in `dir`, in file-name order. Later
    /// records with the same digest replace earlier ones.
    pub fn load_dir(dir: &Path) -> Result<Self, ReplayError> {
        let io = |source| ReplayError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        let mut store = Self::new();
        for path in files {
            let file = File::open(&path).map_err(io)?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: ReplayRecord =
                    serde_json::from_str(&line).map_err(|source| ReplayError::Json {
                        path: path.display().to_string(),
                        line: i + 1,
                        source,
                    })?;
                store.records.insert(record.digest.clone(), record);
            }
        }
        Ok(store)
    }

    pub fn insert(&mut self, request: &ChatRequest, reply: BackendReply) {
        let record = ReplayRecord::new(request, &reply);
        self.records.insert(record.digest.clone(), record);
    }

    pub fn get(&self, digest: &str) -> Option<&ReplayRecord> {
        self.records.get(digest)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Backend for ReplayStore {
    fn invoke(&self, _model: &ModelSpec, request: &ChatRequest) -> Result<BackendReply, BackendError> {
        let digest = request_digest(request);
        let record = self
            .records
            .get(&digest)
            .ok_or(BackendError::ReplayMiss { digest })?;
        Ok(BackendReply {
            text: record.response.clone(),
            prompt_tokens: record.prompt_tokens,
            completion_tokens: record.completion_tokens,
            reported_cost: record.cost,
        })
    }
}

/// Passes calls through to `inner` and appends every successful exchange
/// to `<dir>/records.jsonl`.
pub struct Recorder<B> {
    inner: B,
    file: Mutex<File>,
}

impl<B: Backend> Recorder<B> {
    pub fn create(inner: B, dir: &Path) -> Result<Self, ReplayError> {
        let io = |source| ReplayError::Io {
            path: dir.display().to_string(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(RECORDS_FILE))
            .map_err(io)?;
        Ok(Self {
            inner,
            file: Mutex::new(file),
        })
    }
}

impl<B: Backend> Backend for Recorder<B> {
    fn invoke(&self, model: &ModelSpec, request: &ChatRequest) -> Result<BackendReply, BackendError> {
        let reply = self.inner.invoke(model, request)?;
        let mut line = serde_json::to_string(&ReplayRecord::new(request, &reply))
            .expect("replay record serializes");
        line.push('\n');
        let mut f = self.file.lock().expect("recorder lock");
        f.write_all(line.as_bytes())
            .map_err(|e| BackendError::Transport(format!("recording failed: {e}")))?;
        Ok(reply)
    }
}
