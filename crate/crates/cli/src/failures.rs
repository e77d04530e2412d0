//! Machine-readable list of per-item failures.

use std::path::Path;

use anyhow::Result;
use serde::Serialize;

pub const ERRORS_FILE: &str = "errors.json";

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub item: String,
    pub error: String,
}

/// Writes `errors.json` when anything failed and logs each failure.
pub fn report(dir: &Path, failures: &[Failure]) -> Result<usize> {
    for f in failures {
        log::error!("{}: {}", f.item, f.error);
    }
    if !failures.is_empty() {
        std::fs::write(dir.join(ERRORS_FILE), serde_json::to_string_pretty(failures)? + "\n")?;
    }
    Ok(failures.len())
}
