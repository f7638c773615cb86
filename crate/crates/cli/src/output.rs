//! Buffered output files, content hashes, and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::model_file::Provenance;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_hash(config: &RunConfig) -> String {
    sha256_hex(&serde_json::to_vec(config).expect("config serializes"))
}

/// Inputs read by a command, keyed by the path as given.
#[derive(Debug, Default, Clone)]
pub struct Inputs {
    hashes: BTreeMap<String, String>,
}

impl Inputs {
    pub fn read(&mut self, path: &Path) -> anyhow::Result<String> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.hashes
            .insert(path.display().to_string(), sha256_hex(&bytes));
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    pub fn hashes(&self) -> &BTreeMap<String, String> {
        &self.hashes
    }

    pub fn provenance(&self, config: &RunConfig) -> Provenance {
        Provenance {
            config_hash: config_hash(config),
            input_hashes: self.hashes.clone(),
            tool_version: TOOL_VERSION.to_string(),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'a str,
    command: &'a str,
    seed: u64,
    config_hash: String,
    config: &'a RunConfig,
    inputs: &'a BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

/// Files produced by a command, held in memory until every computation has
/// succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<PathBuf>, contents: impl Into<Vec<u8>>) {
        self.files.push((name.into(), contents.into()));
    }

    pub fn names(&self) -> Vec<String> {
        self.files
            .iter()
            .map(|(p, _)| p.display().to_string())
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(p, _)| p.as_os_str() == name)
            .map(|(_, b)| b.as_slice())
    }

    /// Appends `manifest.json` describing the run.
    pub fn add_manifest(&mut self, command: &str, config: &RunConfig, inputs: &Inputs) {
        let outputs = self
            .files
            .iter()
            .map(|(p, b)| (p.display().to_string(), sha256_hex(b)))
            .collect();
        let manifest = Manifest {
            tool_version: TOOL_VERSION,
            command,
            seed: config.seed,
            config_hash: config_hash(config),
            config,
            inputs: inputs.hashes(),
            outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        self.add("manifest.json", text);
    }

    /// Writes every file under `dir`. If any write fails, files written so
    /// far are removed.
    pub fn commit(self, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            let result = path
                .parent()
                .map_or(Ok(()), fs::create_dir_all)
                .and_then(|_| fs::write(&path, bytes));
            if let Err(e) = result {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                return Err(e).with_context(|| format!("writing {}", path.display()));
            }
            written.push(path);
        }
        Ok(written)
    }
}
