//! Stage cache for search, extraction and summarization results.
//!
//! Values are stored as the serialized stage output, so a hit hands back
//! exactly the bytes that were stored. Optional persistence appends one JSON
//! record per insert; on load the last record for a key wins.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::{Clock, SystemClock};

pub const DEFAULT_TTL: Duration = Duration::from_secs(7 * 24 * 60 * 60);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Search,
    Extract,
    Summarize,
}

impl Stage {
    fn as_str(self) -> &'static str {
        match self {
            Stage::Search => "search",
            Stage::Extract => "extract",
            Stage::Summarize => "summarize",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub value: String,
    pub stored_at_ms: u64,
}

/// Lowercased, whitespace-collapsed form used for query keys.
pub fn normalize_query(q: &str) -> String {
    q.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Hex SHA-256 over the stage name, the normalized subject (query or URL)
/// and the normalized question, separated by unit separators.
pub fn cache_key(stage: Stage, subject: &str, question: &str) -> String {
    let subject = match stage {
        Stage::Extract => subject.trim().to_string(),
        Stage::Search | Stage::Summarize => normalize_query(subject),
    };
    let mut h = Sha256::new();
    h.update(stage.as_str().as_bytes());
    h.update([0x1f]);
    h.update(subject.as_bytes());
    h.update([0x1f]);
    h.update(normalize_query(question).as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub struct StageCache {
    ttl: Duration,
    clock: Arc<dyn Clock>,
    entries: RwLock<HashMap<String, CacheEntry>>,
    log: Option<(PathBuf, Mutex<File>)>,
}

impl std::fmt::Debug for StageCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StageCache")
            .field("ttl", &self.ttl)
            .field("len", &self.len())
            .finish()
    }
}

impl Default for StageCache {
    fn default() -> Self {
        Self::new(DEFAULT_TTL)
    }
}

impl StageCache {
    pub fn new(ttl: Duration) -> Self {
        Self::with_clock(ttl, Arc::new(SystemClock))
    }

    pub fn with_clock(ttl: Duration, clock: Arc<dyn Clock>) -> Self {
        Self {
            ttl,
            clock,
            entries: RwLock::new(HashMap::new()),
            log: None,
        }
    }

    /// Opens (or creates) a persistent cache file. Unreadable lines are
    /// skipped.
    pub fn open(path: &Path, ttl: Duration) -> Result<Self, CacheError> {
        let io = |source| CacheError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut cache = Self::new(ttl);
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            let mut map = HashMap::new();
            for line in reader.lines() {
                let line = line.map_err(io)?;
                if let Ok(entry) = serde_json::from_str::<CacheEntry>(&line) {
                    map.insert(entry.key.clone(), entry);
                }
            }
            cache.entries = RwLock::new(map);
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        cache.log = Some((path.to_path_buf(), Mutex::new(file)));
        Ok(cache)
    }

    pub fn len(&self) -> usize {
        self.entries.read().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let now = self.clock.now_ms();
        let map = self.entries.read().ok()?;
        let entry = map.get(key)?;
        let age = now.saturating_sub(entry.stored_at_ms);
        (u128::from(age) < self.ttl.as_millis()).then(|| entry.value.clone())
    }

    pub fn put(&self, key: String, value: String) {
        let entry = CacheEntry {
            key: key.clone(),
            value,
            stored_at_ms: self.clock.now_ms(),
        };
        if let Some((path, file)) = &self.log {
            let line = serde_json::to_string(&entry).expect("cache entries serialize");
            if let Ok(mut f) = file.lock() {
                if let Err(e) = writeln!(f, "{line}") {
                    tracing::warn!(path = %path.display(), error = %e, "cache append failed");
                }
            }
        }
        if let Ok(mut map) = self.entries.write() {
            map.insert(key, entry);
        }
    }

    /// Typed lookup; entries that no longer deserialize count as misses.
    pub fn get_json<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Option<T> {
        serde_json::from_str(&self.get(key)?).ok()
    }

    pub fn put_json<T: Serialize>(&self, key: String, value: &T) {
        if let Ok(s) = serde_json::to_string(value) {
            self.put(key, s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    #[test]
    fn key_normalizes_query() {
        assert_eq!(
            cache_key(Stage::Search, "  Company  LAW ", "q"),
            cache_key(Stage::Search, "company law", "Q")
        );
        assert_ne!(
            cache_key(Stage::Search, "company law", "q"),
            cache_key(Stage::Summarize, "company law", "q")
        );
        assert_eq!(cache_key(Stage::Extract, "x", "").len(), 64);
    }

    #[test]
    fn ttl_expiry() {
        let clock = Arc::new(ManualClock::new(0));
        let cache = StageCache::with_clock(DEFAULT_TTL, clock.clone());
        cache.put("k".into(), "v".into());
        clock.advance(DEFAULT_TTL - Duration::from_secs(1));
        assert_eq!(cache.get("k").as_deref(), Some("v"));
        clock.advance(Duration::from_secs(1));
        assert_eq!(cache.get("k"), None);
    }

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let c = StageCache::open(&path, DEFAULT_TTL).unwrap();
            c.put("a".into(), "1".into());
            c.put("a".into(), "2".into());
        }
        let c = StageCache::open(&path, DEFAULT_TTL).unwrap();
        assert_eq!(c.get("a").as_deref(), Some("2"));
    }
}
