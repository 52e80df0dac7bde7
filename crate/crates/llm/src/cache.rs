use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use crate::client::{GenerationClient, GenerationRequest, GenerationResponse};
use rumi_core::Result;

/// Memoizes responses per (endpoint, request), in memory and optionally in
/// one JSON file per request hash under `dir`.
#[derive(Debug)]
pub struct CachedClient<C> {
    inner: C,
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, GenerationResponse>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<C: GenerationClient> CachedClient<C> {
    pub fn new(inner: C) -> Self {
        Self { inner, dir: None, memory: Mutex::default(), hits: AtomicUsize::new(0), misses: AtomicUsize::new(0) }
    }

    pub fn with_dir(inner: C, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir: Some(dir), ..Self::new(inner) })
    }

    pub fn key(&self, request: &GenerationRequest) -> String {
        let body = serde_json::to_string(request).expect("request serializes");
        let mut h = Sha256::new();
        h.update(self.inner.endpoint().as_bytes());
        h.update([0u8]);
        h.update(body.as_bytes());
        hex::encode(h.finalize())
    }

    /// Requests answered without calling the inner client.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    /// Requests forwarded to the inner client.
    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.memory.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }
}

impl<C: GenerationClient> GenerationClient for CachedClient<C> {
    fn endpoint(&self) -> &str {
        self.inner.endpoint()
    }

    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse> {
        let key = self.key(request);
        if let Some(resp) = self.memory.lock().expect("cache lock").get(&key) {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(resp.clone());
        }
        if let Some(path) = self.path(&key) {
            if let Ok(bytes) = std::fs::read(&path) {
                if let Ok(resp) = serde_json::from_slice::<GenerationResponse>(&bytes) {
                    self.hits.fetch_add(1, Ordering::SeqCst);
                    self.memory.lock().expect("cache lock").insert(key, resp.clone());
                    return Ok(resp);
                }
            }
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let resp = self.inner.complete(request)?;
        if let Some(path) = self.path(&key) {
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, serde_json::to_vec(&resp)?)?;
            std::fs::rename(&tmp, &path)?;
        }
        self.memory.lock().expect("cache lock").insert(key, resp.clone());
        Ok(resp)
    }
}
