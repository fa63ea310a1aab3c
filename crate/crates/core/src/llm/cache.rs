//! Append-only JSONL response cache with an in-memory index.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub response: String,
    pub ts: DateTime<Utc>,
}

#[derive(Debug)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    index: RwLock<HashMap<String, String>>,
    file: Mutex<Option<File>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            index: RwLock::new(HashMap::new()),
            file: Mutex::new(None),
        }
    }

    /// Opens (or creates) a cache file and indexes its records. Lines that fail
    /// to parse, such as a torn final write, are skipped with a warning. The
    /// first record for a key wins.
    pub fn open(path: &Path) -> Result<Self> {
        let mut index = HashMap::new();
        if path.exists() {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheRecord>(&line) {
                    Ok(rec) => {
                        index.entry(rec.key).or_insert(rec.response);
                    }
                    Err(e) => warn!(
                        "{}: skipping unreadable cache line {}: {e}",
                        path.display(),
                        i + 1
                    ),
                }
            }
        } else if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut file = file;
        let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        if len > 0
            && !fs::read(path)
                .map_err(|e| Error::io(path, e))?
                .ends_with(b"\n")
        {
            // Terminate a torn record so the next append starts a fresh line.
            file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            index: RwLock::new(index),
            file: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.index
            .read()
            .expect("cache index lock")
            .get(key)
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("cache index lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a response unless the key is already cached. Each record is
    /// written as one line in a single append.
    pub fn insert(&self, key: &str, response: &str) -> Result<()> {
        let mut file = self.file.lock().expect("cache file lock");
        let mut index = self.index.write().expect("cache index lock");
        if index.contains_key(key) {
            return Ok(());
        }
        if let Some(f) = file.as_mut() {
            let rec = CacheRecord {
                key: key.to_string(),
                response: response.to_string(),
                ts: Utc::now(),
            };
            let mut line = serde_json::to_string(&rec).expect("cache record serializes");
            line.push('\n');
            let path = self.path.as_deref().unwrap_or(Path::new("<cache>"));
            f.write_all(line.as_bytes())
                .map_err(|e| Error::io(path, e))?;
            f.flush().map_err(|e| Error::io(path, e))?;
        }
        index.insert(key.to_string(), response.to_string());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/cache.jsonl");
        let cache = ResponseCache::open(&path).unwrap();
        cache.insert("k1", "first").unwrap();
        cache.insert("k1", "ignored").unwrap();
        cache.insert("k2", "line\nbreak").unwrap();
        drop(cache);

        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let rec: CacheRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!((rec.key.as_str(), rec.response.as_str()), ("k1", "first"));

        let reopened = ResponseCache::open(&path).unwrap();
        assert_eq!(reopened.get("k1").as_deref(), Some("first"));
        assert_eq!(reopened.get("k2").as_deref(), Some("line\nbreak"));
        assert_eq!(reopened.len(), 2);
    }

    #[test]
    fn torn_tail_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        fs::write(&path, "{\"key\":\"a\",\"response\":\"x\",\"ts\":\"2024-01-01T00:00:00Z\"}\n{\"key\":\"b\",\"resp").unwrap();
        let cache = ResponseCache::open(&path).unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(cache.get("a").as_deref(), Some("x"));
        cache.insert("c", "y").unwrap();
        drop(cache);
        let reopened = ResponseCache::open(&path).unwrap();
        assert_eq!(reopened.get("c").as_deref(), Some("y"));
    }
}
