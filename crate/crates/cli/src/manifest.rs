//! Atomic emission of a command's outputs followed by its run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gofbt::figures::Artifact;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::settings::Resolved;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub config: BTreeMap<String, Resolved>,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<OutputEntry>,
    pub timestamp: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, &path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(path)
}

/// Writes every artifact, then the manifest. On failure the files written
/// so far are removed and the error is returned.
pub fn emit(
    dir: &Path,
    command: &str,
    config: &BTreeMap<String, Resolved>,
    seed: u64,
    inputs: Vec<InputDigest>,
    artifacts: &[Artifact],
) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let result = (|| -> Result<PathBuf> {
        let mut outputs = Vec::new();
        for a in artifacts {
            written.push(write_atomic(dir, &a.name, &a.bytes)?);
            outputs.push(OutputEntry {
                file: a.name.clone(),
                sha256: sha256_hex(&a.bytes),
            });
        }
        let manifest = RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            config: config.clone(),
            seed,
            inputs,
            outputs,
            timestamp: chrono::Utc::now().to_rfc3339(),
        };
        write_atomic(dir, MANIFEST_NAME, &serde_json::to_vec_pretty(&manifest)?)
    })();
    if result.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
    }
    result
}
