//! `run.json`: the resolved config, seed and output hashes of every command
//! run into an output directory, keyed by command name.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{io_err, Result};

pub const RUN_FILE: &str = "run.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: Option<u64>,
    pub config: RunConfig,
    /// Output path (relative to the output directory) to SHA-256 hex digest.
    pub artifacts: BTreeMap<String, String>,
    pub version: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub runs: BTreeMap<String, RunRecord>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    Ok(hex)
}

/// Merge this command's record into `out_dir/run.json`.
pub fn record(out_dir: &Path, command: &str, config: &RunConfig, artifacts: &[PathBuf]) -> Result<PathBuf> {
    let path = out_dir.join(RUN_FILE);
    let mut log: RunLog = match std::fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_default(),
        Err(_) => RunLog::default(),
    };
    let mut hashes = BTreeMap::new();
    for a in artifacts {
        let rel = a.strip_prefix(out_dir).unwrap_or(a);
        hashes.insert(rel.to_string_lossy().replace('\\', "/"), sha256_file(a)?);
    }
    log.runs.insert(
        command.to_string(),
        RunRecord {
            seed: config.seed,
            config: config.clone(),
            artifacts: hashes,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    );
    let mut bytes = serde_json::to_vec_pretty(&log)?;
    bytes.push(b'\n');
    cuisine_nn::checkpoint::write_atomic(&path, &bytes).map_err(io_err(&path))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn records_merge_by_command() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.bin");
        std::fs::write(&a, b"x").unwrap();
        let cfg = RunConfig::default();
        record(dir.path(), "synth", &cfg, std::slice::from_ref(&a)).unwrap();
        record(dir.path(), "eval", &cfg, &[]).unwrap();
        let log: RunLog = serde_json::from_slice(&std::fs::read(dir.path().join(RUN_FILE)).unwrap()).unwrap();
        assert_eq!(log.runs.len(), 2);
        assert!(log.runs["synth"].artifacts.contains_key("a.bin"));
        assert_eq!(log.runs["eval"].config, cfg);
    }
}
