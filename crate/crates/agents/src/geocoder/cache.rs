use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

/// One cached upstream response, keyed by the query string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub response: String,
    pub fetched_at: u64,
}

/// Append-only JSON-lines cache with TTL expiry. The newest record for a
/// key wins; nothing is ever deleted.
pub struct GeocodeCache {
    path: PathBuf,
    ttl_ms: u64,
    entries: RwLock<HashMap<String, CacheEntry>>,
    writer: Mutex<()>,
}

pub const CACHE_FILE: &str = "geocode_cache.jsonl";

impl GeocodeCache {
    pub fn open(path: impl Into<PathBuf>, ttl_ms: u64) -> std::io::Result<Self> {
        let path = path.into();
        let mut entries = HashMap::new();
        match std::fs::File::open(&path) {
            Ok(f) => {
                for line in BufReader::new(f).lines() {
                    // A torn final line from a crash is skipped.
                    if let Ok(e) = serde_json::from_str::<CacheEntry>(&line?) {
                        entries.insert(e.key.clone(), e);
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e),
        }
        Ok(Self {
            path,
            ttl_ms,
            entries: RwLock::new(entries),
            writer: Mutex::new(()),
        })
    }

    /// Cache in `dir/geocode_cache.jsonl`.
    pub fn in_dir(dir: &Path, ttl_ms: u64) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Self::open(dir.join(CACHE_FILE), ttl_ms)
    }

    pub fn get(&self, key: &str, now_ms: u64) -> Option<CacheEntry> {
        let entries = self.entries.read().unwrap_or_else(|e| e.into_inner());
        entries
            .get(key)
            .filter(|e| now_ms.saturating_sub(e.fetched_at) < self.ttl_ms)
            .cloned()
    }

    pub fn put(&self, entry: CacheEntry) -> std::io::Result<()> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut line = serde_json::to_string(&entry).map_err(std::io::Error::other)?;
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(line.as_bytes())?;
        self.entries
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(entry.key.clone(), entry);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persists_and_expires() {
        let dir = tempfile::tempdir().unwrap();
        let hour = 3_600_000;
        let c = GeocodeCache::in_dir(dir.path(), 24 * hour).unwrap();
        c.put(CacheEntry {
            key: "q=a".into(),
            response: "{}".into(),
            fetched_at: 1_000,
        })
        .unwrap();
        drop(c);
        let c = GeocodeCache::in_dir(dir.path(), 24 * hour).unwrap();
        assert!(c.get("q=a", 1_000 + hour).is_some());
        assert!(c.get("q=a", 1_000 + 24 * hour).is_none());
        assert!(c.get("q=b", 1_000).is_none());
    }
}
