//! Content-addressed stage cache.
//!
//! A stage is keyed by its name, its parameters and the checksums of every
//! file it reads. The record lists each output with its checksum, so a
//! damaged output forces the stage to run again.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// What went into a stage.
#[derive(Debug, Default)]
pub struct StageKey {
    parts: BTreeMap<String, String>,
}

impl StageKey {
    pub fn new(stage: &str, params: &serde_json::Value) -> Self {
        let mut key = StageKey::default();
        key.parts.insert("#stage".into(), stage.into());
        key.parts.insert("#params".into(), params.to_string());
        key
    }

    /// A file read by the stage, under a label stable across machines.
    pub fn file(&mut self, label: &str, path: &Path) -> Result<()> {
        self.parts.insert(format!("file:{label}"), sha256_file(path)?);
        Ok(())
    }

    /// Outputs of an upstream stage, by their recorded checksums.
    pub fn upstream(&mut self, record: &StageRecord) {
        for (rel, sha) in &record.outputs {
            self.parts.insert(format!("out:{rel}"), sha.clone());
        }
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.parts {
            h.update(k.as_bytes());
            h.update([0]);
            h.update(v.as_bytes());
            h.update([0]);
        }
        hex(&h.finalize())
    }
}

/// Cache entry for one executed stage. Output paths are relative to the
/// output directory and use `/` separators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub key: String,
    pub outputs: BTreeMap<String, String>,
}

pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(output_dir: &Path) -> Self {
        Cache { root: output_dir.to_path_buf() }
    }

    fn record_path(&self, stage: &str) -> PathBuf {
        self.root.join(".cache").join(format!("{stage}.json"))
    }

    pub fn load(&self, stage: &str) -> Option<StageRecord> {
        let text = fs::read_to_string(self.record_path(stage)).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// The record, if its key matches and every output still verifies.
    pub fn valid(&self, stage: &str, key: &str) -> Option<StageRecord> {
        let record = self.load(stage)?;
        if record.key != key {
            return None;
        }
        for (rel, sha) in &record.outputs {
            match sha256_file(&self.root.join(rel)) {
                Ok(actual) if &actual == sha => {}
                _ => {
                    log::info!("{stage}: output {rel} failed verification");
                    return None;
                }
            }
        }
        Some(record)
    }

    /// Checksum the listed outputs and persist the record.
    pub fn store(&self, stage: &str, key: String, outputs: &[String]) -> Result<StageRecord> {
        let mut map = BTreeMap::new();
        for rel in outputs {
            map.insert(rel.clone(), sha256_file(&self.root.join(rel))?);
        }
        let record = StageRecord { key, outputs: map };
        let path = self.record_path(stage);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string_pretty(&record).expect("record serializes") + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(record)
    }

    pub fn invalidate(&self, stage: &str) {
        let _ = fs::remove_file(self.record_path(stage));
    }
}
