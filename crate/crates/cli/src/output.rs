use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::Failure;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: u64,
    pub version: String,
    /// File name to SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    pub wall_time_secs: f64,
}

/// Collects a command's outputs in memory so they are written together, by
/// one writer, once all jobs are done.
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn new() -> Self {
        Outputs { files: Vec::new() }
    }

    pub fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    /// Writes every file plus the manifest into `dir`.
    pub fn write(self, dir: &Path, command: &str, config: Value, seed: u64, started: Instant) -> Result<(), Failure> {
        let io = |p: &Path, e: std::io::Error| Failure::Runtime(format!("cannot write {}: {e}", p.display()));
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut outputs = BTreeMap::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| io(&path, e))?;
            outputs.insert(name.clone(), hex::encode(Sha256::digest(bytes)));
        }
        let manifest = RunManifest {
            command: command.to_string(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs,
            wall_time_secs: started.elapsed().as_secs_f64(),
        };
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| io(&path, e))
    }
}
