use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::checkpoint::write_atomic;

pub const RUN_MANIFEST_FILE: &str = "run.json";
pub const RUN_MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Record of one command invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Subcommand, plus the stage for pretraining.
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub code_version: String,
    /// Unix seconds.
    pub started_at: u64,
    pub finished_at: Option<u64>,
}

/// The single manifest file of an output directory; commands sharing a directory each own one entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifestFile {
    pub schema_version: u32,
    pub runs: Vec<RunManifest>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: impl Into<String>, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command: command.into(),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: now(),
            finished_at: None,
        }
    }

    pub fn with_paths(mut self, inputs: &[&Path], outputs: &[&Path]) -> Self {
        self.inputs = inputs.iter().map(|p| p.to_path_buf()).collect();
        self.outputs = outputs.iter().map(|p| p.to_path_buf()).collect();
        self
    }

    /// Stores this run in `dir`, replacing an earlier entry of the same command.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut file = read_run_manifest(dir)?.unwrap_or(RunManifestFile {
            schema_version: RUN_MANIFEST_SCHEMA_VERSION,
            runs: Vec::new(),
        });
        match file.runs.iter_mut().find(|r| r.command == self.command) {
            Some(r) => *r = self.clone(),
            None => file.runs.push(self.clone()),
        }
        let path = dir.join(RUN_MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&file).map_err(|e| Error::json(&path, e))?;
        write_atomic(&path, (text + "\n").as_bytes())
    }

    pub fn finish(&mut self, dir: &Path) -> Result<()> {
        self.finished_at = Some(now());
        self.write(dir)
    }
}

pub fn read_run_manifest(dir: &Path) -> Result<Option<RunManifestFile>> {
    let path = dir.join(RUN_MANIFEST_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let file: RunManifestFile = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    if file.schema_version != RUN_MANIFEST_SCHEMA_VERSION {
        return Err(Error::State(format!(
            "{} has schema version {} (expected {RUN_MANIFEST_SCHEMA_VERSION})",
            path.display(),
            file.schema_version
        )));
    }
    Ok(Some(file))
}
