//! The run manifest: everything needed to repeat a command.
//!
//! Each command writes `run_manifest.json` into its output directory with the
//! parsed command, the resolved configuration, the worker count, digests of
//! the datasets it read and digests of every file it wrote.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::Command;
use crate::config::ExperimentConfig;

pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const RUN_FORMAT: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format: u32,
    pub tool_version: String,
    pub command: Command,
    pub desk: bool,
    pub workers: usize,
    pub config: ExperimentConfig,
    /// Dataset name to SHA-256 of its content.
    pub datasets: BTreeMap<String, String>,
    /// Checkpoint name to parameter hash.
    pub provenance: BTreeMap<String, String>,
    /// Output file, relative to the output directory, to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing run manifest {}", path.display()))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RUN_MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digests of every regular file under `dir` except the run manifest itself.
pub fn digest_outputs(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(dir).unwrap_or(&path).to_string_lossy().replace('\\', "/");
            if rel == RUN_MANIFEST {
                continue;
            }
            let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            out.insert(rel, sha256_hex(&bytes));
        }
    }
    Ok(out)
}
