use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SCHEMA_VERSION;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    /// The run stopped early; listed files are partial results.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Written as `manifest.json` next to the outputs of every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub command: String,
    pub kind: Option<String>,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub status: RunStatus,
    pub error: Option<String>,
    pub wall_time_secs: f64,
    /// Non-finite values are stored as `null`.
    pub summary: Summary,
    pub files: Vec<FileEntry>,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64), CliError> {
    let bytes = std::fs::read(path)?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

/// Output directory that records every file written into it.
pub struct Artifacts {
    root: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    /// Registers `name` and returns its full path.
    pub fn path(&mut self, name: &str) -> Result<PathBuf, CliError> {
        if name == MANIFEST || self.files.iter().any(|f| f == name) {
            return Err(CliError::Runtime(format!("output {name} written twice")));
        }
        self.files.push(name.to_string());
        let p = self.root.join(name);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(p)
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.path(name)?)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        std::fs::write(self.path(name)?, text)?;
        Ok(())
    }

    /// Hashes the registered files that exist and writes the manifest.
    pub fn finish(self, mut manifest: Manifest) -> Result<Manifest, CliError> {
        manifest.files.clear();
        for name in &self.files {
            let p = self.root.join(name);
            if p.exists() {
                let (sha256, bytes) = sha256_file(&p)?;
                manifest.files.push(FileEntry { path: name.clone(), sha256, bytes });
            }
        }
        manifest.schema = SCHEMA_VERSION;
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(self.root.join(MANIFEST), text + "\n")?;
        Ok(manifest)
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    let p = dir.join(MANIFEST);
    let text =
        std::fs::read_to_string(&p).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", p.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub type Summary = BTreeMap<String, Option<f64>>;

pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Mean of `value` per `key`, in key order.
pub fn group_means<T>(rows: &[T], key: impl Fn(&T) -> String, value: impl Fn(&T) -> f64) -> Summary {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups.entry(key(r)).or_default().push(value(r));
    }
    groups.into_iter().map(|(k, v)| (k, finite(mean(v)))).collect()
}
