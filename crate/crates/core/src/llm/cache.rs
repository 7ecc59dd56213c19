use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{GenerationParams, LlmError};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheEntry {
    pub key: String,
    pub value: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    model: &'a str,
    prompt: &'a str,
    top_p: f64,
    temperature: f64,
    max_new_tokens: u32,
    stop: &'a [String],
    seed: Option<u64>,
}

/// SHA-256 over the canonical JSON of the model, prompt and sampling params.
pub fn cache_key(model: &str, prompt: &str, params: &GenerationParams) -> String {
    let material = KeyMaterial {
        model,
        prompt,
        top_p: params.top_p,
        temperature: params.temperature,
        max_new_tokens: params.max_new_tokens,
        stop: &params.stop_sequences,
        seed: params.seed,
    };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Append-only completion cache backed by a JSONL file.
#[derive(Debug)]
pub struct ResponseCache {
    path: PathBuf,
    entries: Mutex<HashMap<String, String>>,
    file: Mutex<File>,
}

impl ResponseCache {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let corrupt = |message: String| Error::CacheCorrupt {
                    path: path.clone(),
                    line: idx + 1,
                    message,
                };
                let line = line.map_err(|e| corrupt(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry =
                    serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
                if entry.key.len() != 64 || !entry.key.bytes().all(|b| b.is_ascii_hexdigit()) {
                    return Err(corrupt(format!("malformed key `{}`", entry.key)));
                }
                match entries.get(&entry.key) {
                    Some(existing) if existing != &entry.value => {
                        return Err(corrupt(format!("conflicting values for key {}", entry.key)))
                    }
                    Some(_) => {}
                    None => {
                        entries.insert(entry.key, entry.value);
                    }
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            entries: Mutex::new(entries),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    pub fn insert(&self, key: String, value: String) -> Result<(), LlmError> {
        let entry = CacheEntry {
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            key,
            value,
        };
        let mut line = serde_json::to_vec(&entry).expect("entry serializes");
        line.push(b'\n');
        {
            let mut file = self.file.lock().unwrap();
            file.write_all(&line)
                .and_then(|_| file.flush())
                .map_err(|e| LlmError::Cache(format!("{}: {e}", self.path.display())))?;
        }
        self.entries.lock().unwrap().insert(entry.key, entry.value);
        Ok(())
    }

    /// Returns the cached completion for this request, or calls `complete`
    /// and persists its result. The flag is true on a cache hit.
    pub fn lookup_or_complete(
        &self,
        model: &str,
        prompt: &str,
        params: &GenerationParams,
        complete: impl FnOnce() -> Result<String, LlmError>,
    ) -> Result<(String, bool), LlmError> {
        let key = cache_key(model, prompt, params);
        if let Some(hit) = self.get(&key) {
            return Ok((hit, true));
        }
        let value = complete()?;
        self.insert(key, value.clone())?;
        Ok((value, false))
    }
}
