//! Run manifests: one JSON record per command invocation with the effective
//! configuration, input digests, outputs, wall time and counters.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::write_file;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub oov_dropped: usize,
    pub malformed_lines: usize,
    pub none_docs: usize,
    pub cache_hits: usize,
    pub provider_calls: usize,
    pub failed_docs: usize,
}

impl Counters {
    pub fn add(&mut self, other: &Counters) {
        self.oov_dropped += other.oov_dropped;
        self.malformed_lines += other.malformed_lines;
        self.none_docs += other.none_docs;
        self.cache_hits += other.cache_hits;
        self.provider_calls += other.provider_calls;
        self.failed_docs += other.failed_docs;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub started_at: DateTime<Utc>,
    pub wall_seconds: f64,
    pub config: serde_json::Value,
    /// Input path to hex SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    /// Output role to path.
    pub outputs: BTreeMap<String, PathBuf>,
    pub counters: Counters,
    /// Command-specific figures such as vocabulary size or accuracy.
    pub stats: BTreeMap<String, serde_json::Value>,
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects a manifest while a command runs.
pub struct ManifestBuilder {
    manifest: RunManifest,
    clock: Instant,
}

impl ManifestBuilder {
    pub fn start(command: &str, config: &impl Serialize) -> Self {
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                started_at: Utc::now(),
                wall_seconds: 0.0,
                config: serde_json::to_value(config).expect("config serializes"),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                counters: Counters::default(),
                stats: BTreeMap::new(),
            },
            clock: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.manifest
            .inputs
            .insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn output(&mut self, role: &str, path: &Path) {
        self.manifest
            .outputs
            .insert(role.to_string(), path.to_path_buf());
    }

    pub fn counters(&mut self) -> &mut Counters {
        &mut self.manifest.counters
    }

    pub fn stat(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("stat serializes");
        self.manifest.stats.insert(key.to_string(), v);
    }

    pub fn finish(mut self) -> RunManifest {
        self.manifest.wall_seconds = self.clock.elapsed().as_secs_f64();
        self.manifest
    }
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self).expect("manifest serializes");
        json.push('\n');
        write_file(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}
