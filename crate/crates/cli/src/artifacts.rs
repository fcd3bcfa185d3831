use std::fs;
use std::path::{Path, PathBuf};

use biflow::experiments::{ExperimentResult, Table};
use biflow::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// First 12 hex digits of the SHA-256 of the canonical JSON.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value).map_err(|e| Error::config(e.to_string()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().take(6).map(|b| format!("{b:02x}")).collect())
}

/// `<root>/<UTC timestamp>-<hash>`, suffixed if that name is taken.
pub fn create_run_dir(root: &Path, hash: &str) -> Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    fs::create_dir_all(root)?;
    let base = format!("{stamp}-{hash}");
    let mut dir = root.join(&base);
    let mut k = 1;
    while dir.exists() {
        k += 1;
        dir = root.join(format!("{base}-{k}"));
    }
    fs::create_dir(&dir)?;
    Ok(dir)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_table(dir: &Path, table: &Table) -> Result<PathBuf> {
    let path = dir.join(format!("{}.csv", table.name));
    fs::write(&path, table.to_csv())?;
    Ok(path)
}

pub fn write_result(dir: &Path, result: &ExperimentResult) -> Result<()> {
    write_json(&dir.join("result.json"), result)?;
    for t in &result.series {
        write_table(dir, t)?;
    }
    Ok(())
}
