//! Run directories are append-only: creating one that already holds files
//! is an error, and every run records enough metadata to be re-executed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Metadata snapshot written into every run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// Content hashes of referenced input files (oracle CSVs, checkpoints).
    pub input_hashes: Vec<(String, String)>,
}

pub fn tool_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

/// Create a fresh run directory; refuses to reuse a non-empty one.
pub fn create_run_dir(path: &Path) -> Result<PathBuf> {
    if path.exists() {
        let occupied = std::fs::read_dir(path)?.next().is_some();
        if occupied {
            return Err(Error::OutputDirNotEmpty(path.display().to_string()));
        }
    } else {
        std::fs::create_dir_all(path)?;
    }
    Ok(path.to_path_buf())
}

pub fn write_metadata(dir: &Path, metadata: &RunMetadata) -> Result<()> {
    let text = serde_json::to_string_pretty(metadata)?;
    std::fs::write(dir.join("metadata.json"), text)?;
    Ok(())
}

/// SHA-256 of a file, hex-encoded; used to pin referenced inputs.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_to_overwrite_occupied_directory() {
        let dir = tempfile::tempdir().unwrap();
        let run = dir.path().join("run1");
        create_run_dir(&run).unwrap();
        std::fs::write(run.join("something.txt"), "data").unwrap();
        assert!(matches!(create_run_dir(&run), Err(Error::OutputDirNotEmpty(_))));
    }

    #[test]
    fn empty_directory_is_reusable() {
        let dir = tempfile::tempdir().unwrap();
        let run = dir.path().join("run2");
        std::fs::create_dir_all(&run).unwrap();
        assert!(create_run_dir(&run).is_ok());
    }
}
