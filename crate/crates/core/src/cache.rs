//! Content-addressed disk cache for expensive per-block results.
//!
//! Entries are JSON envelopes `{schema, key, checksum, payload}` named by a
//! SHA-256 of the canonical JSON of their inputs plus [`SCHEMA_VERSION`].
//! Writes go through a temporary file and an atomic rename; reads take no
//! locks. A corrupt entry is reported once and recomputed.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Bumped whenever a cached quantity's definition changes.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that overrides the cache directory.
pub const CACHE_ENV: &str = "QMEM_CACHE_DIR";

#[derive(Serialize, Deserialize)]
struct Envelope {
    schema: u32,
    key: String,
    checksum: String,
    payload: String,
}

#[derive(Serialize)]
struct KeyMaterial<'a, T: Serialize> {
    schema: u32,
    kind: &'a str,
    inputs: &'a T,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Stable cache key for `inputs` of a given `kind`.
pub fn cache_key<T: Serialize>(kind: &str, inputs: &T) -> Result<String> {
    let material = serde_json::to_vec(&KeyMaterial { schema: SCHEMA_VERSION, kind, inputs })?;
    Ok(sha256_hex(&material))
}

#[derive(Debug)]
pub struct Cache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, String>>,
    corrupt_logged: AtomicBool,
}

impl Cache {
    /// Disk-backed cache, or memory-only (with a warning) when `dir` cannot
    /// be created or written.
    pub fn open(dir: impl Into<PathBuf>) -> Self {
        let dir = dir.into();
        let usable = fs::create_dir_all(&dir).is_ok() && tempfile::NamedTempFile::new_in(&dir).is_ok();
        if !usable {
            log::warn!("cache directory {} is not writable; caching in memory only", dir.display());
        }
        Cache { dir: usable.then_some(dir), memory: Mutex::default(), corrupt_logged: AtomicBool::new(false) }
    }

    pub fn in_memory() -> Self {
        Cache { dir: None, memory: Mutex::default(), corrupt_logged: AtomicBool::new(false) }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn is_persistent(&self) -> bool {
        self.dir.is_some()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    fn report_corrupt(&self, path: &Path, why: &str) {
        if !self.corrupt_logged.swap(true, Ordering::Relaxed) {
            log::warn!("discarding corrupt cache entry {} ({why}); recomputing", path.display());
        }
    }

    /// Cached value for `key`, or `None` if absent or corrupt.
    pub fn get<V: DeserializeOwned>(&self, key: &str) -> Option<V> {
        let payload = match self.path(key) {
            Some(path) => {
                let text = fs::read_to_string(&path).ok()?;
                let env: Envelope = match serde_json::from_str(&text) {
                    Ok(e) => e,
                    Err(_) => {
                        self.report_corrupt(&path, "unparsable envelope");
                        return None;
                    }
                };
                if env.schema != SCHEMA_VERSION || env.key != key || env.checksum != sha256_hex(env.payload.as_bytes()) {
                    self.report_corrupt(&path, "checksum mismatch");
                    return None;
                }
                env.payload
            }
            None => self.memory.lock().expect("cache lock").get(key)?.clone(),
        };
        serde_json::from_str(&payload).ok()
    }

    pub fn put<V: Serialize>(&self, key: &str, value: &V) -> Result<()> {
        let payload = serde_json::to_string(value)?;
        let Some(path) = self.path(key) else {
            self.memory.lock().expect("cache lock").insert(key.to_owned(), payload);
            return Ok(());
        };
        let env = Envelope { schema: SCHEMA_VERSION, key: key.to_owned(), checksum: sha256_hex(payload.as_bytes()), payload };
        let dir = path.parent().expect("entry has a parent");
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        serde_json::to_writer(&mut tmp, &env)?;
        tmp.flush()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }

    /// Cached value, or `compute()` stored under `key`. Store failures are
    /// logged, not propagated.
    pub fn get_or_compute<V, F>(&self, key: &str, compute: F) -> Result<V>
    where
        V: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<V>,
    {
        if let Some(v) = self.get(key) {
            return Ok(v);
        }
        let v = compute()?;
        if let Err(e) = self.put(key, &v) {
            log::warn!("could not store cache entry {key}: {e}");
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn put_then_get() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path());
        assert!(cache.is_persistent());
        let value = vec![0.1_f64, 1.0 / 3.0, 2.0f64.sqrt(), f64::MIN_POSITIVE];
        let key = cache_key("test", &("a", 1)).unwrap();
        assert_eq!(cache.get::<Vec<f64>>(&key), None);
        cache.put(&key, &value).unwrap();
        assert_eq!(cache.get::<Vec<f64>>(&key), Some(value.clone()));
        // A fresh handle on the same directory sees the entry.
        assert_eq!(Cache::open(dir.path()).get::<Vec<f64>>(&key), Some(value));
    }

    #[test]
    fn key_sensitive_to_one_ulp() {
        let x = 0.7_f64;
        let y = f64::from_bits(x.to_bits() + 1);
        assert_ne!(cache_key("k", &x).unwrap(), cache_key("k", &y).unwrap());
        assert_ne!(cache_key("k", &x).unwrap(), cache_key("j", &x).unwrap());
        assert_eq!(cache_key("k", &x).unwrap(), cache_key("k", &0.7_f64).unwrap());
    }

    #[test]
    fn corrupt_entry_is_recomputed_and_overwritten() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path());
        let key = cache_key("test", &42).unwrap();
        cache.put(&key, &vec![1.0, 2.0]).unwrap();
        let path = dir.path().join(format!("{key}.json"));
        let text = fs::read_to_string(&path).unwrap().replace("2.0", "3.0");
        fs::write(&path, text).unwrap();
        assert_eq!(cache.get::<Vec<f64>>(&key), None);
        let calls = Cell::new(0);
        let v: Vec<f64> = cache
            .get_or_compute(&key, || {
                calls.set(calls.get() + 1);
                Ok(vec![1.0, 2.0])
            })
            .unwrap();
        assert_eq!((v, calls.get()), (vec![1.0, 2.0], 1));
        assert_eq!(cache.get::<Vec<f64>>(&key), Some(vec![1.0, 2.0]));
        fs::write(&path, "garbage").unwrap();
        assert_eq!(cache.get::<Vec<f64>>(&key), None);
    }

    #[test]
    fn unwritable_directory_falls_back_to_memory() {
        let file = tempfile::NamedTempFile::new().unwrap();
        let cache = Cache::open(file.path().join("sub"));
        assert!(!cache.is_persistent());
        cache.put("k", &5u32).unwrap();
        assert_eq!(cache.get::<u32>("k"), Some(5));
    }
}
