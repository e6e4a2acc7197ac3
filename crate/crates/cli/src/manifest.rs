//! `manifest.json` in the output directory: one entry per stage with the
//! files it wrote and their SHA-256.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub stages: BTreeMap<String, StageRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub wall_seconds: f64,
    pub files: Vec<FileRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn load_or_new(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(RunManifest { tool_version: env!("CARGO_PKG_VERSION").into(), stages: BTreeMap::new() });
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::format(format!("{}: {e}", path.display())))
    }

    /// Hashes `files` (relative to `dir`), replaces the stage entry and
    /// rewrites the manifest.
    pub fn record(
        dir: &Path,
        stage: &str,
        config_hash: String,
        started_unix: f64,
        files: &[&str],
    ) -> Result<(), CliError> {
        let mut m = Self::load_or_new(dir)?;
        m.tool_version = env!("CARGO_PKG_VERSION").into();
        let files = files
            .iter()
            .map(|f| Ok(FileRecord { path: f.to_string(), sha256: sha256_file(&dir.join(f))? }))
            .collect::<Result<Vec<_>, CliError>>()?;
        let finished = unix_now();
        m.stages.insert(
            stage.into(),
            StageRecord {
                config_hash,
                started_unix,
                finished_unix: finished,
                wall_seconds: finished - started_unix,
                files,
            },
        );
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    /// Every listed file exists and still has its recorded hash.
    pub fn verify(&self, dir: &Path) -> Result<(), CliError> {
        for (stage, rec) in &self.stages {
            for f in &rec.files {
                let actual = sha256_file(&dir.join(&f.path))?;
                if actual != f.sha256 {
                    return Err(CliError::format(format!("{stage}: {} changed since it was recorded", f.path)));
                }
            }
        }
        Ok(())
    }
}
