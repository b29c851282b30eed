use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::TeacherClient;
use crate::error::{Error, Result};
use crate::io::{sha256_hex, write_atomic};

/// One cached teacher response, stored at `<dir>/<digest[..2]>/<digest>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub prompt_digest: String,
    pub prompt: String,
    pub completions: Vec<String>,
    pub temperature: f64,
    /// Unix seconds at write time.
    pub timestamp: u64,
}

/// Content-addressed replay cache in front of an optional live teacher.
///
/// Hits are served from disk byte for byte. Misses go to the live teacher
/// and are recorded; without one a miss is `TeacherUnavailable`.
pub struct ReplayClient {
    dir: PathBuf,
    inner: Option<Arc<dyn TeacherClient>>,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl ReplayClient {
    pub fn new(dir: impl Into<PathBuf>, inner: Option<Arc<dyn TeacherClient>>) -> Self {
        ReplayClient {
            dir: dir.into(),
            inner,
            locks: Mutex::new(HashMap::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    /// Cache-only client.
    pub fn offline(dir: impl Into<PathBuf>) -> Self {
        Self::new(dir, None)
    }

    pub fn digest(prompt: &str) -> String {
        sha256_hex(prompt.as_bytes())
    }

    pub fn record_path(&self, digest: &str) -> PathBuf {
        self.dir.join(&digest[..2]).join(format!("{digest}.json"))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::SeqCst)
    }

    fn key_lock(&self, digest: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().expect("cache lock poisoned");
        locks.entry(digest.to_string()).or_default().clone()
    }

    fn load(&self, path: &Path) -> Option<CacheRecord> {
        let bytes = std::fs::read(path).ok()?;
        serde_json::from_slice(&bytes).ok()
    }
}

impl TeacherClient for ReplayClient {
    fn generate(&self, prompt: &str, n: usize, temperature: f64) -> Result<Vec<String>> {
        let digest = Self::digest(prompt);
        let lock = self.key_lock(&digest);
        let _guard = lock.lock().expect("cache key lock poisoned");
        let path = self.record_path(&digest);

        if let Some(record) = self.load(&path) {
            if record.prompt == prompt && record.completions.len() >= n {
                self.hits.fetch_add(1, Ordering::SeqCst);
                return Ok(record.completions[..n].to_vec());
            }
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let inner = self.inner.as_ref().ok_or_else(|| {
            Error::TeacherUnavailable(format!("cache miss for prompt {} and no live teacher", &digest[..12]))
        })?;
        let completions = inner.generate(prompt, n, temperature)?;
        let record = CacheRecord {
            prompt_digest: digest,
            prompt: prompt.to_string(),
            completions: completions.clone(),
            temperature,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        };
        write_atomic(&path, serde_json::to_string_pretty(&record)?.as_bytes())?;
        Ok(completions)
    }
}
