//! Binary weight files and the structured-text manifest that accompanies them.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::layers::Param;
use super::stage::{ModuleNet, NetStage};
use super::unet::UNetSpec;
use crate::error::{Error, Result};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const WEIGHT_MAGIC: &[u8; 8] = b"SSTRW001";

/// Manifest entry for one stage net.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: NetStage,
    pub spec: UNetSpec,
    pub seed: u64,
    pub step: u64,
    pub loss: Option<f64>,
    pub weights: String,
}

/// `manifest.json` of a checkpoint directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub schema_version: u32,
    /// Candidate words, in condition-index order.
    pub candidates: Vec<String>,
    pub side: usize,
    pub stages: Vec<StageRecord>,
}

impl CheckpointManifest {
    pub fn new(candidates: Vec<String>, side: usize) -> Self {
        Self {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            candidates,
            side,
            stages: Vec::new(),
        }
    }

    pub fn stage(&self, stage: NetStage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }

    /// Inserts or replaces the record of `record.stage`.
    pub fn upsert(&mut self, record: StageRecord) {
        match self.stages.iter_mut().find(|r| r.stage == record.stage) {
            Some(r) => *r = record,
            None => self.stages.push(record),
        }
        self.stages.sort_by_key(|r| r.stage);
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::State(format!("cannot read manifest {}: {e}", path.display())))?;
        let m: Self = serde_json::from_str(&text)
            .map_err(|e| Error::State(format!("corrupt manifest {}: {e}", path.display())))?;
        if m.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::State(format!(
                "checkpoint schema version {} (expected {CHECKPOINT_SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(&path, e))?;
        write_atomic(&path, (text + "\n").as_bytes())
    }
}

/// Writes through a temporary file and renames, so a crash never leaves a torn file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Serializes named f32 tensors: magic, count, then (name, length, little-endian values).
pub fn encode_tensors<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a [f32])>) -> Vec<u8> {
    let items: Vec<_> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHT_MAGIC);
    out.extend_from_slice(&(items.len() as u32).to_le_bytes());
    for (name, values) in items {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<(String, Vec<f32>)>> {
    let corrupt = |m: &str| Error::State(format!("corrupt weight file: {m}"));
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| corrupt("truncated header"))?;
    if &magic != WEIGHT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let mut u32buf = [0u8; 4];
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u32buf).map_err(|_| corrupt("truncated count"))?;
    let count = u32::from_le_bytes(u32buf) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut u32buf).map_err(|_| corrupt("truncated name length"))?;
        let nlen = u32::from_le_bytes(u32buf) as usize;
        if nlen > r.len() {
            return Err(corrupt("name exceeds file"));
        }
        let name = String::from_utf8(r[..nlen].to_vec()).map_err(|_| corrupt("non-utf8 name"))?;
        r = &r[nlen..];
        r.read_exact(&mut u64buf).map_err(|_| corrupt("truncated tensor length"))?;
        let len = u64::from_le_bytes(u64buf) as usize;
        if len.checked_mul(4).is_none_or(|b| b > r.len()) {
            return Err(corrupt("tensor exceeds file"));
        }
        let values = r[..len * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        r = &r[len * 4..];
        out.push((name, values));
    }
    if !r.is_empty() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(out)
}

/// Copies decoded tensors into `params`, requiring identical names and lengths in order.
pub fn assign_params(params: Vec<&mut Param<f32>>, tensors: Vec<(String, Vec<f32>)>) -> Result<()> {
    if params.len() != tensors.len() {
        return Err(Error::State(format!(
            "weight file holds {} tensors, net has {}",
            tensors.len(),
            params.len()
        )));
    }
    for (p, (name, values)) in params.into_iter().zip(tensors) {
        if p.name != name || p.value.len() != values.len() {
            return Err(Error::State(format!(
                "tensor {name} ({}) does not match parameter {} ({})",
                values.len(),
                p.name,
                p.value.len()
            )));
        }
        p.value = values;
    }
    Ok(())
}

pub fn weights_file_name(stage: NetStage) -> String {
    format!("{}.bin", stage.name())
}

/// Writes one stage's weights into `dir` and returns the file path.
pub fn save_module(net: &ModuleNet, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(weights_file_name(net.stage));
    let params = net.net.params();
    let bytes = encode_tensors(params.iter().map(|p| (p.name.as_str(), p.value.as_slice())));
    write_atomic(&path, &bytes)?;
    Ok(path)
}

/// Rebuilds a stage net from its manifest record and weight file.
pub fn load_module(dir: impl AsRef<Path>, record: &StageRecord) -> Result<ModuleNet> {
    let path = dir.as_ref().join(&record.weights);
    let bytes = fs::read(&path).map_err(|e| Error::State(format!("cannot read weights {}: {e}", path.display())))?;
    let mut net = ModuleNet::build(record.stage, record.spec.clone(), record.seed)?;
    assign_params(net.net.params_mut(), decode_tensors(&bytes)?)?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::NetWidth;

    #[test]
    fn module_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let width = NetWidth { base_channels: 4, max_channels: 8 };
        let net = ModuleNet::<f32>::for_stage(NetStage::Removal, 3, width, 5).unwrap();
        save_module(&net, dir.path()).unwrap();
        let record = StageRecord {
            stage: NetStage::Removal,
            spec: net.spec().clone(),
            seed: 999,
            step: 12,
            loss: Some(0.5),
            weights: weights_file_name(NetStage::Removal),
        };
        let back = load_module(dir.path(), &record).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn corrupt_and_missing() {
        assert!(decode_tensors(b"garbage").is_err());
        let mut bytes = encode_tensors([("a", &[1.0f32, 2.0][..])]);
        bytes.pop();
        assert!(matches!(decode_tensors(&bytes), Err(Error::State(_))));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(CheckpointManifest::load(dir.path()), Err(Error::State(_))));
    }

    #[test]
    fn manifest_version_checked() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = CheckpointManifest::new(vec!["a".into()], 64);
        m.schema_version = 7;
        m.save(dir.path()).unwrap();
        assert!(matches!(CheckpointManifest::load(dir.path()), Err(Error::State(_))));
    }
}
