use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::TrainStage;
use super::optim::Adam;
use crate::error::{Error, Result};
use crate::nets::checkpoint::{
    decode_tensors, encode_tensors, load_module, save_module, weights_file_name, CheckpointManifest, StageRecord,
    MANIFEST_FILE,
};
use crate::nets::layers::Param;
use crate::nets::{stage_seed, ModuleNet, NetStage, PipelineNet};

/// The trainable model of a run: one stage net, or the whole pipeline when fine-tuning.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Single(ModuleNet),
    Pipeline(PipelineNet),
}

impl Model {
    pub fn nets(&self) -> Vec<&ModuleNet> {
        match self {
            Model::Single(n) => vec![n],
            Model::Pipeline(p) => NetStage::PIPELINE.iter().map(|&s| p.stage(s)).collect(),
        }
    }

    /// Every parameter tensor, tagged with its stage, in a fixed order.
    pub fn params_mut(&mut self) -> Vec<(NetStage, &mut Param<f32>)> {
        match self {
            Model::Single(n) => {
                let s = n.stage;
                n.net.params_mut().into_iter().map(|p| (s, p)).collect()
            }
            Model::Pipeline(p) => {
                let mut out = Vec::new();
                for net in [&mut p.background, &mut p.text_extract, &mut p.removal, &mut p.reconstruct] {
                    let s = net.stage;
                    out.extend(net.net.params_mut().into_iter().map(|q| (s, q)));
                }
                out
            }
        }
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.nets()
            .into_iter()
            .flat_map(|n| n.net.params().into_iter().map(|p| p.len()).collect::<Vec<_>>())
            .collect()
    }

    pub fn zero_grad(&mut self) {
        match self {
            Model::Single(n) => n.net.zero_grad(),
            Model::Pipeline(p) => p.zero_grad(),
        }
    }
}

/// Progress of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub run: TrainStage,
    /// Completed optimizer steps.
    pub step: u64,
    /// Batch loss of the latest step.
    pub last_loss: Option<f64>,
    /// Exponential moving average of the batch loss.
    pub running_loss: Option<f64>,
    pub best_val_loss: Option<f64>,
    pub best_step: Option<u64>,
    /// Master seed; batch `s` is drawn from the stream keyed by (seed, s), so the step
    /// counter is the whole sampler state.
    pub seed: u64,
    pub candidates: Vec<String>,
    pub side: usize,
}

impl TrainState {
    pub fn new(run: TrainStage, seed: u64, candidates: Vec<String>, side: usize) -> Self {
        Self {
            run,
            step: 0,
            last_loss: None,
            running_loss: None,
            best_val_loss: None,
            best_step: None,
            seed,
            candidates,
            side,
        }
    }

    pub fn record(&mut self, loss: f64) {
        self.step += 1;
        self.last_loss = Some(loss);
        self.running_loss = Some(match self.running_loss {
            Some(r) => 0.98 * r + 0.02 * loss,
            None => loss,
        });
    }
}

pub fn state_file(run: TrainStage) -> String {
    format!("{}.state.json", run.name())
}

pub fn optim_file(run: TrainStage) -> String {
    format!("{}.adam.bin", run.name())
}

pub fn log_file(run: TrainStage) -> String {
    format!("{}_log.csv", run.name())
}

fn read_manifest_or_new(dir: &Path, state: &TrainState) -> Result<CheckpointManifest> {
    if !dir.join(MANIFEST_FILE).exists() {
        return Ok(CheckpointManifest::new(state.candidates.clone(), state.side));
    }
    let m = CheckpointManifest::load(dir)?;
    if m.candidates != state.candidates || m.side != state.side {
        return Err(Error::State(format!(
            "{} holds checkpoints for candidates {:?} at side {}, this run uses {:?} at side {}",
            dir.display(),
            m.candidates,
            m.side,
            state.candidates,
            state.side
        )));
    }
    Ok(m)
}

/// Writes the model's weights and updates the manifest records of its stages.
pub fn save_model(dir: impl AsRef<Path>, model: &Model, state: &TrainState) -> Result<()> {
    let dir = dir.as_ref();
    let mut manifest = read_manifest_or_new(dir, state)?;
    for net in model.nets() {
        save_module(net, dir)?;
        manifest.upsert(StageRecord {
            stage: net.stage,
            spec: net.spec().clone(),
            seed: stage_seed(state.seed, net.stage),
            step: state.step,
            loss: state.last_loss,
            weights: weights_file_name(net.stage),
        });
    }
    manifest.save(dir)
}

/// Saves everything needed to resume: weights, optimizer moments and the train state.
pub fn checkpoint_save(dir: impl AsRef<Path>, model: &Model, optim: &Adam, state: &TrainState) -> Result<()> {
    let dir = dir.as_ref();
    save_model(dir, model, state)?;
    let names: Vec<String> = (0..optim.m.len()).flat_map(|i| [format!("m{i}"), format!("v{i}")]).collect();
    let tensors = optim
        .m
        .iter()
        .zip(&optim.v)
        .flat_map(|(m, v)| [m.as_slice(), v.as_slice()]);
    let bytes = encode_tensors(names.iter().map(String::as_str).zip(tensors));
    crate::nets::checkpoint::write_atomic(&dir.join(optim_file(state.run)), &bytes)?;
    let path = dir.join(state_file(state.run));
    let text = serde_json::to_string_pretty(&(state, optim.t)).map_err(|e| Error::json(&path, e))?;
    crate::nets::checkpoint::write_atomic(&path, (text + "\n").as_bytes())
}

/// Loads the stage nets a run trains from a checkpoint directory.
pub fn load_model(dir: impl AsRef<Path>, run: TrainStage) -> Result<(Model, CheckpointManifest)> {
    let dir = dir.as_ref();
    match run.net_stage() {
        Some(stage) => {
            let (net, m) = load_stage_net(dir, stage)?;
            Ok((Model::Single(net), m))
        }
        None => {
            let (p, m) = load_pipeline(dir)?;
            Ok((Model::Pipeline(p), m))
        }
    }
}

pub fn load_stage_net(dir: impl AsRef<Path>, stage: NetStage) -> Result<(ModuleNet, CheckpointManifest)> {
    let dir = dir.as_ref();
    let m = CheckpointManifest::load(dir)?;
    let rec = m
        .stage(stage)
        .ok_or_else(|| Error::State(format!("{} has no {} checkpoint", dir.display(), stage.name())))?;
    Ok((load_module(dir, rec)?, m))
}

/// Loads all four pipeline stages from one checkpoint directory.
pub fn load_pipeline(dir: impl AsRef<Path>) -> Result<(PipelineNet, CheckpointManifest)> {
    let dir = dir.as_ref();
    let m = CheckpointManifest::load(dir)?;
    let mut nets = Vec::new();
    for s in NetStage::PIPELINE {
        let rec = m
            .stage(s)
            .ok_or_else(|| Error::State(format!("{} has no {} checkpoint", dir.display(), s.name())))?;
        nets.push(load_module(dir, rec)?);
    }
    let mut it = nets.into_iter();
    let mut next = || it.next().expect("four stages");
    let p = PipelineNet::from_stages(next(), next(), next(), next())?;
    if p.k() != m.candidates.len() {
        return Err(Error::State(format!(
            "removal net expects K={} but the manifest lists {} candidates",
            p.k(),
            m.candidates.len()
        )));
    }
    Ok((p, m))
}

/// Restores model, optimizer and train state of `run` from `dir`.
pub fn checkpoint_load(dir: impl AsRef<Path>, run: TrainStage) -> Result<(Model, Adam, TrainState)> {
    let dir = dir.as_ref();
    let path = dir.join(state_file(run));
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::State(format!("cannot read train state {}: {e}", path.display())))?;
    let (state, t): (TrainState, u64) = serde_json::from_str(&text)
        .map_err(|e| Error::State(format!("corrupt train state {}: {e}", path.display())))?;
    if state.run != run {
        return Err(Error::State(format!("{} belongs to a {} run", path.display(), state.run.name())));
    }
    let (model, manifest) = load_model(dir, run)?;
    if manifest.candidates != state.candidates {
        return Err(Error::State("manifest and train state disagree on candidates".into()));
    }
    let opath = dir.join(optim_file(run));
    let bytes = fs::read(&opath).map_err(|e| Error::State(format!("cannot read {}: {e}", opath.display())))?;
    let tensors = decode_tensors(&bytes)?;
    let sizes = model.param_sizes();
    if tensors.len() != 2 * sizes.len() {
        return Err(Error::State(format!("{} does not match the model", opath.display())));
    }
    let mut optim = Adam::new(0.0, 0.9, 0.999, 1e-8, &sizes);
    optim.t = t;
    for (i, pair) in tensors.chunks_exact(2).enumerate() {
        if pair[0].1.len() != sizes[i] || pair[1].1.len() != sizes[i] {
            return Err(Error::State(format!("{} does not match the model", opath.display())));
        }
        optim.m[i] = pair[0].1.clone();
        optim.v[i] = pair[1].1.clone();
    }
    Ok((model, optim, state))
}

/// Appends `(step, loss, val_loss)` rows to a delimited log, writing the header on creation.
pub fn append_log(path: &Path, rows: &[(u64, f64, Option<f64>)]) -> Result<()> {
    let fresh = !path.exists();
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut buf = String::new();
    if fresh {
        buf.push_str("step,loss,val_loss\n");
    }
    for (step, loss, val) in rows {
        match val {
            Some(v) => buf.push_str(&format!("{step},{loss},{v}\n")),
            None => buf.push_str(&format!("{step},{loss},\n")),
        }
    }
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Parses a loss log back into rows.
pub fn read_log(path: &Path) -> Result<Vec<(u64, f64, Option<f64>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |l: &str| Error::State(format!("bad log line '{l}' in {}", path.display()));
    text.lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split(',');
            let step = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(l))?;
            let loss = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(l))?;
            let val = match it.next() {
                Some("") | None => None,
                Some(s) => Some(s.parse().map_err(|_| bad(l))?),
            };
            Ok((step, loss, val))
        })
        .collect()
}

pub fn best_dir(out_dir: &Path) -> PathBuf {
    out_dir.join("best")
}
