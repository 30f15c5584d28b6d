use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::HarnessError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CODE_VERSION: &str = concat!("cirlt ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tag: String,
    pub code_version: String,
    /// SHA-256 of the compact JSON form of the effective configuration.
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub start_unix: f64,
    pub end_unix: f64,
    pub outputs: Vec<OutputEntry>,
    /// Experiment-specific statistics.
    pub summary: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    sha256_hex(serde_json::to_string(cfg).expect("config serializes").as_bytes())
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Writes files into one directory and records their digests.
#[derive(Debug)]
pub struct OutputSink {
    dir: PathBuf,
    entries: Vec<OutputEntry>,
}

impl OutputSink {
    pub fn create(dir: &Path) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), HarnessError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        self.entries.push(OutputEntry {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn finish(
        self,
        cfg: &ExperimentConfig,
        start_unix: f64,
        summary: serde_json::Value,
    ) -> Result<RunManifest, HarnessError> {
        let m = RunManifest {
            tag: cfg.tag.to_string(),
            code_version: CODE_VERSION.into(),
            config_hash: config_hash(cfg),
            config: cfg.clone(),
            start_unix,
            end_unix: unix_now(),
            outputs: self.entries,
            summary,
        };
        let json = serde_json::to_string_pretty(&m).map_err(|e| HarnessError::Io(e.to_string()))?;
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, json + "\n").map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Ok(m)
    }
}

/// Reads a manifest and checks every recorded digest against the file on
/// disk. Returns the names of mismatching or missing files.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>, HarnessError> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| HarnessError::Io(e.to_string()))?;
    let mut bad = Vec::new();
    for e in &m.outputs {
        match std::fs::read(dir.join(&e.file)) {
            Ok(b) if sha256_hex(&b) == e.sha256 => {}
            _ => bad.push(e.file.clone()),
        }
    }
    Ok(bad)
}
