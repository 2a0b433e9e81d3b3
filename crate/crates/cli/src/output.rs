//! Staged outputs, digests and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn now_unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serialisable value");
    out.push(b'\n');
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Digest of a file, or of every file below a directory in sorted order.
pub fn digest_inputs(path: &Path) -> Result<Vec<FileDigest>, CliError> {
    let mut files = Vec::new();
    collect_files(path, &mut files)?;
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let bytes = fs::read(&p)?;
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_hex(&bytes),
            })
        })
        .collect()
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    if path.is_dir() {
        for entry in fs::read_dir(path)? {
            collect_files(&entry?.path(), out)?;
        }
    } else {
        fs::metadata(path)?;
        out.push(path.to_path_buf());
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
    pub seed_source: &'static str,
    pub version: &'static str,
    pub jobs: usize,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// Files held in memory until the command has succeeded.
#[derive(Default)]
pub struct Staged {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Staged {
    pub fn add(&mut self, rel: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((rel.into(), bytes));
    }

    pub fn digests(&self) -> Vec<FileDigest> {
        self.files
            .iter()
            .map(|(p, b)| FileDigest {
                path: p.display().to_string(),
                sha256: sha256_hex(b),
            })
            .collect()
    }

    /// Writes everything to a sibling temporary directory, then moves it into
    /// place: the whole directory when `out` does not exist yet, file by file
    /// otherwise.
    pub fn commit(self, out: &Path) -> Result<(), CliError> {
        let parent = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)?;
        let name = out
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into());
        let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        let result = (|| {
            for (rel, bytes) in &self.files {
                let path = tmp.join(rel);
                if let Some(dir) = path.parent() {
                    fs::create_dir_all(dir)?;
                }
                fs::write(&path, bytes)?;
            }
            if !out.exists() {
                fs::rename(&tmp, out)?;
                return Ok(());
            }
            if !out.is_dir() {
                return Err(CliError::Usage(format!("{} exists and is not a directory", out.display())));
            }
            for (rel, _) in &self.files {
                let dst = out.join(rel);
                if let Some(dir) = dst.parent() {
                    fs::create_dir_all(dir)?;
                }
                fs::rename(tmp.join(rel), dst)?;
            }
            Ok(())
        })();
        if tmp.exists() {
            let _ = fs::remove_dir_all(&tmp);
        }
        result
    }
}
