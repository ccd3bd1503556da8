//! `manifest.json` in the run directory: one entry per command with the
//! config hash, the seeds used, and digests of inputs and outputs.

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub commands: BTreeMap<String, CommandRecord>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct CommandRecord {
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn sha256_str(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

/// Builds a record as a command runs.
pub struct Recorder {
    run_dir: PathBuf,
    name: &'static str,
    record: CommandRecord,
}

impl Recorder {
    pub fn new(run_dir: &Path, name: &'static str, config_hash: &str) -> Self {
        Self {
            run_dir: run_dir.to_path_buf(),
            name,
            record: CommandRecord {
                config_hash: config_hash.to_string(),
                ..Default::default()
            },
        }
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.record.seeds.insert(name.to_string(), seed);
    }

    /// Inputs are keyed by file name so that records do not depend on where
    /// the run directory lives.
    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let key = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.record.inputs.insert(key, sha256_file(path)?);
        Ok(())
    }

    /// Outputs are keyed by their path relative to the run directory.
    pub fn output(&mut self, path: &Path) -> anyhow::Result<()> {
        let key = path
            .strip_prefix(&self.run_dir)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        self.record.outputs.insert(key, sha256_file(path)?);
        Ok(())
    }

    pub fn finish(self) -> anyhow::Result<()> {
        let path = self.run_dir.join("manifest.json");
        let mut manifest: Manifest = match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Manifest::default(),
            Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
        };
        manifest.commands.insert(self.name.to_string(), self.record);
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}
