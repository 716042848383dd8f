use std::path::Path;

use serde::Serialize;

use crate::error::CliError;
use crate::output::{read_manifest, sha256_file, RunStatus, Summary};

#[derive(Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub kind: Option<String>,
    pub config_hash: String,
    pub status: RunStatus,
    pub files_verified: usize,
    pub summary: Summary,
}

/// Checks every manifest entry against the file on disk and returns the run summary.
pub fn verify(dir: &Path) -> Result<Report, CliError> {
    let m = read_manifest(dir)?;
    for f in &m.files {
        let p = dir.join(&f.path);
        let (hash, bytes) = sha256_file(&p).map_err(|e| CliError::Validation(format!("{}: {e}", f.path)))?;
        if hash != f.sha256 || bytes != f.bytes {
            return Err(CliError::Validation(format!("{} does not match its manifest hash", f.path)));
        }
    }
    Ok(Report {
        command: m.command,
        kind: m.kind,
        config_hash: m.config_hash,
        status: m.status,
        files_verified: m.files.len(),
        summary: m.summary,
    })
}
