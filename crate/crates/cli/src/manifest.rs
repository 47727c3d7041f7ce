use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use valuegate::dataset::write_atomic;
use valuegate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reproducibility record written next to every command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub tool_version: String,
    pub seed: u64,
    /// Seeds handed to each randomness consumer, derived from `seed`.
    pub seeds: serde_json::Map<String, serde_json::Value>,
    pub config_sha256: String,
    pub effective_config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_clock_seconds: f64,
}

/// Collects inputs, outputs and seeds while a command runs.
#[derive(Debug)]
pub struct Recorder {
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seeds: serde_json::Map<String, serde_json::Value>,
}

impl Default for Recorder {
    fn default() -> Self {
        Self {
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seeds: serde_json::Map::new(),
        }
    }
}

impl Recorder {
    pub fn input(&mut self, path: &Path) {
        if !self.inputs.iter().any(|p| p == path) {
            self.inputs.push(path.to_path_buf());
        }
    }

    pub fn output(&mut self, path: PathBuf) {
        if !self.outputs.contains(&path) {
            self.outputs.push(path);
        }
    }

    pub fn seed(&mut self, consumer: &str, seed: u64) {
        self.seeds.insert(consumer.into(), seed.into());
    }

    /// Hashes every recorded file and writes `manifest.json` into `out_dir`.
    pub fn finish(
        self,
        out_dir: &Path,
        command: &str,
        args: Vec<String>,
        seed: u64,
        effective_config: serde_json::Value,
    ) -> Result<PathBuf> {
        let canonical = serde_json::to_string(&effective_config)?;
        let manifest = RunManifest {
            command: command.into(),
            args,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            seeds: self.seeds,
            config_sha256: sha256_hex(canonical.as_bytes()),
            effective_config,
            inputs: self.inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = out_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}
