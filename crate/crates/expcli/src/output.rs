use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, ConfigError, RunError};
use crate::experiments::Artifact;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Every artifact of a run. The manifest does not list itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub seed: u64,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Creates `dir`, or empties the files a previous run listed in its manifest.
///
/// Fails when `dir` holds anything a previous manifest does not account for.
pub fn prepare(dir: &Path) -> Result<(), CliError> {
    let bad = |msg: String| CliError::from(ConfigError::invalid("out", msg));
    if !dir.exists() {
        return fs::create_dir_all(dir).map_err(|e| bad(format!("cannot create {}: {e}", dir.display())));
    }
    if !dir.is_dir() {
        return Err(bad(format!("{} is not a directory", dir.display())));
    }
    let manifest_path = dir.join(MANIFEST);
    if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(|e| RunError::io(&manifest_path, e))?;
        let old: Manifest = serde_json::from_str(&text)
            .map_err(|e| bad(format!("{} is not a manifest: {e}", manifest_path.display())))?;
        for entry in &old.files {
            let p = dir.join(&entry.path);
            if p.is_file() {
                fs::remove_file(&p).map_err(|e| RunError::io(&p, e))?;
            }
        }
        fs::remove_file(&manifest_path).map_err(|e| RunError::io(&manifest_path, e))?;
    }
    let leftover: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| RunError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    if let Some(p) = leftover.first() {
        return Err(bad(format!("{} is not empty (found {})", dir.display(), p.display())));
    }
    Ok(())
}

/// Writes the artifacts one at a time in name order, then the manifest.
pub fn write_all(dir: &Path, experiment: &str, seed: u64, mut artifacts: Vec<Artifact>) -> Result<Manifest, RunError> {
    artifacts.sort_by(|a, b| a.name.cmp(&b.name));
    let mut files = Vec::with_capacity(artifacts.len());
    for a in &artifacts {
        let path = dir.join(&a.name);
        fs::write(&path, &a.bytes).map_err(|e| RunError::io(&path, e))?;
        files.push(FileEntry { path: a.name.clone(), bytes: a.bytes.len() as u64, sha256: sha256_hex(&a.bytes) });
    }
    let manifest = Manifest { experiment: experiment.to_string(), seed, files };
    let mut text = serde_json::to_vec_pretty(&manifest).map_err(RunError::compute)?;
    text.push(b'\n');
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| RunError::io(&path, e))?;
    Ok(manifest)
}
