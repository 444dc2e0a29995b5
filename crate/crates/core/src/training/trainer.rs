use std::fs;

use rand::seq::index;
use rand::Rng;

use super::config::{TrainConfig, TrainStage};
use super::data::{Batch, PairSet};
use super::optim::Adam;
use super::split::{read_split, SplitPart};
use super::state::{append_log, best_dir, checkpoint_load, checkpoint_save, load_stage_net, log_file, save_model, Model, TrainState};
use crate::error::{Error, Result};
use crate::nets::{mse_loss, stage_seed, AuxGrads, ModuleNet, NetStage, PipelineNet, Tensor};
use crate::rng::{domain, stream};
use crate::synthgen::Dataset;

/// Owns the model, optimizer and data of one run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: Model,
    pub optim: Adam,
    pub state: TrainState,
    pub train: PairSet,
    pub val: Option<PairSet>,
    pending_log: Vec<(u64, f64, Option<f64>)>,
}

fn cond_arg(cond: &[f32]) -> Option<&[f32]> {
    (!cond.is_empty()).then_some(cond)
}

impl Trainer {
    /// Assembles a trainer from in-memory parts, starting at step 0.
    pub fn from_parts(cfg: TrainConfig, model: Model, train: PairSet, val: Option<PairSet>, candidates: Vec<String>) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(Error::Dataset("training set is empty".into()));
        }
        if train.stage != cfg.stage {
            return Err(Error::Config(format!("pairs are for {}, config trains {}", train.stage.name(), cfg.stage.name())));
        }
        let optim = Adam::new(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, &model.param_sizes());
        let state = TrainState::new(cfg.stage, cfg.seed, candidates, train.height);
        Ok(Self {
            cfg,
            model,
            optim,
            state,
            train,
            val: val.filter(|v| !v.is_empty()),
            pending_log: Vec::new(),
        })
    }

    /// Loads data and builds (or, with `resume`, restores) the model described by `cfg`.
    pub fn new(cfg: TrainConfig, resume: bool) -> Result<Self> {
        cfg.validate()?;
        let ds = Dataset::open(&cfg.train_data)?;
        let meta = ds.meta().clone();
        if meta.side != cfg.side {
            return Err(Error::Config(format!(
                "config side {} but {} has side {}",
                cfg.side,
                cfg.train_data.display(),
                meta.side
            )));
        }
        let split = if cfg.use_split { read_split(&cfg.train_data)? } else { None };
        let train_idx = match &split {
            Some(s) => s.part(SplitPart::Train),
            None => (0..ds.len()).collect(),
        };
        let train = PairSet::load(cfg.stage, &ds, &train_idx, cfg.aux_losses)?;
        let mut val_idx_ds = match &cfg.val_data {
            Some(p) => {
                let vds = Dataset::open(p)?;
                if vds.meta().candidates != meta.candidates || vds.meta().side != meta.side {
                    return Err(Error::Dataset(format!("{} does not match the training set", p.display())));
                }
                let n = vds.len();
                Some((vds, (0..n).collect::<Vec<_>>()))
            }
            None => split.as_ref().map(|s| (ds.clone(), s.part(SplitPart::Val))),
        };
        if let Some((_, idx)) = &mut val_idx_ds {
            if cfg.max_val_samples > 0 {
                idx.truncate(cfg.max_val_samples);
            }
        }
        let val = match &val_idx_ds {
            Some((vds, idx)) if !idx.is_empty() => Some(PairSet::load(cfg.stage, vds, idx, cfg.aux_losses)?),
            _ => None,
        };
        let candidates = meta.candidates.clone();
        if resume {
            let (model, mut optim, state) = checkpoint_load(&cfg.out_dir, cfg.stage)?;
            if state.candidates != candidates || state.side != cfg.side {
                return Err(Error::State("checkpoint was trained on a different vocabulary or side".into()));
            }
            optim.lr = cfg.lr;
            optim.beta1 = cfg.beta1;
            optim.beta2 = cfg.beta2;
            optim.eps = cfg.eps;
            let mut t = Self::from_parts(cfg, model, train, val, candidates)?;
            t.optim = optim;
            t.state = state;
            return Ok(t);
        }
        let model = initial_model(&cfg, meta.k)?;
        Self::from_parts(cfg, model, train, val, candidates)
    }

    /// Indices of the mini-batch used at step `step` (0-based): without replacement when the
    /// set is large enough.
    pub fn batch_indices(&self, step: u64) -> Vec<usize> {
        let n = self.train.len();
        let bs = self.cfg.batch_size;
        let mut rng = stream(self.cfg.seed, domain::BATCH, step);
        if n >= bs {
            index::sample(&mut rng, n, bs).into_vec()
        } else {
            (0..bs).map(|_| rng.gen_range(0..n)).collect()
        }
    }

    /// Loss of the model on a batch without touching gradients.
    pub fn batch_loss(&self, batch: &Batch) -> Result<f64> {
        Ok(match &self.model {
            Model::Single(net) => {
                let y = net.net.predict(&batch.input, cond_arg(&batch.cond))?;
                mse_loss(&y, &batch.target).0
            }
            Model::Pipeline(p) => {
                let (y, tape) = p.forward(&batch.input, &batch.cond)?;
                let mut loss = mse_loss(&y, &batch.target).0;
                if let Some([bg, text, stripped]) = &batch.aux {
                    loss += mse_loss(&tape.predicted_background, bg).0;
                    loss += mse_loss(&tape.text_layer, text).0;
                    loss += mse_loss(&tape.stripped_layer, stripped).0;
                }
                loss
            }
        })
    }

    /// Mean loss over all pairs of `set`, evaluated in chunks of the batch size.
    pub fn set_loss(&self, set: &PairSet) -> Result<f64> {
        let idx: Vec<usize> = (0..set.len()).collect();
        let mut total = 0.0;
        for chunk in idx.chunks(self.cfg.batch_size) {
            total += self.batch_loss(&set.batch(chunk))? * chunk.len() as f64;
        }
        Ok(total / set.len() as f64)
    }

    pub fn train_loss(&self) -> Result<f64> {
        self.set_loss(&self.train)
    }

    pub fn val_loss(&self) -> Result<Option<f64>> {
        self.val.as_ref().map(|v| self.set_loss(v)).transpose()
    }

    /// One optimizer step; returns the batch loss before the update.
    pub fn step(&mut self) -> Result<f64> {
        let batch = self.train.batch(&self.batch_indices(self.state.step));
        self.model.zero_grad();
        let loss = match &mut self.model {
            Model::Single(net) => {
                let (y, tape) = net.net.forward(&batch.input, cond_arg(&batch.cond))?;
                let (loss, dy) = mse_loss(&y, &batch.target);
                net.net.backward(&tape, &dy, false);
                loss
            }
            Model::Pipeline(p) => {
                let (y, tape) = p.forward(&batch.input, &batch.cond)?;
                let (mut loss, dy) = mse_loss(&y, &batch.target);
                let mut aux = AuxGrads::<f32>::default();
                if let Some([bg, text, stripped]) = &batch.aux {
                    let grad = |pred: &Tensor<f32>, t: &Tensor<f32>, loss: &mut f64| {
                        let (l, g) = mse_loss(pred, t);
                        *loss += l;
                        g
                    };
                    aux.background = Some(grad(&tape.predicted_background, bg, &mut loss));
                    aux.text_layer = Some(grad(&tape.text_layer, text, &mut loss));
                    aux.stripped_layer = Some(grad(&tape.stripped_layer, stripped, &mut loss));
                }
                p.backward_with_aux(&tape, &dy, &aux);
                loss
            }
        };
        if !loss.is_finite() {
            return Err(Error::State(format!("loss diverged at step {}", self.state.step + 1)));
        }
        let freeze = self.cfg.freeze.clone();
        let slots = self
            .model
            .params_mut()
            .into_iter()
            .map(|(s, p)| (!freeze.contains(&s)).then_some(p))
            .collect();
        self.optim.step(slots)?;
        self.state.record(loss);
        Ok(loss)
    }

    /// Saves a resumable checkpoint and flushes buffered log rows.
    pub fn save(&mut self) -> Result<()> {
        fs::create_dir_all(&self.cfg.out_dir).map_err(|e| Error::io(&self.cfg.out_dir, e))?;
        checkpoint_save(&self.cfg.out_dir, &self.model, &self.optim, &self.state)?;
        append_log(&self.cfg.out_dir.join(log_file(self.cfg.stage)), &self.pending_log)?;
        self.pending_log.clear();
        Ok(())
    }

    /// Trains until `max_steps`, validating and checkpointing every `eval_every` steps.
    pub fn run(&mut self) -> Result<()> {
        while self.state.step < self.cfg.max_steps {
            let loss = self.step()?;
            let step = self.state.step;
            let at_eval = step % self.cfg.eval_every == 0 || step == self.cfg.max_steps;
            let val = if at_eval { self.val_loss()? } else { None };
            self.pending_log.push((step, loss, val));
            if at_eval {
                if let Some(v) = val {
                    if self.state.best_val_loss.is_none_or(|b| v < b) {
                        self.state.best_val_loss = Some(v);
                        self.state.best_step = Some(step);
                        save_model(best_dir(&self.cfg.out_dir), &self.model, &self.state)?;
                    }
                }
                log::info!(
                    "{} step {step}/{} loss {loss:.6} val {}",
                    self.cfg.stage.name(),
                    self.cfg.max_steps,
                    val.map_or("-".into(), |v| format!("{v:.6}"))
                );
                self.save()?;
            }
        }
        Ok(())
    }
}

/// Fresh or pretrained model for a run that is not resuming.
fn initial_model(cfg: &TrainConfig, k: usize) -> Result<Model> {
    let width = cfg.width();
    match cfg.stage.net_stage() {
        Some(stage) => Ok(Model::Single(ModuleNet::for_stage(stage, k, width, stage_seed(cfg.seed, stage))?)),
        None => {
            let mut nets = Vec::new();
            for stage in NetStage::PIPELINE {
                let net = match load_stage_net(cfg.init_dir(), stage) {
                    Ok((net, m)) => {
                        if m.candidates.len() != k {
                            return Err(Error::State(format!(
                                "pretrained {} net has K={} but the dataset has K={k}",
                                stage.name(),
                                m.candidates.len()
                            )));
                        }
                        net
                    }
                    Err(e) if cfg.allow_scratch => {
                        log::warn!("{}: {e}; starting from scratch", stage.name());
                        ModuleNet::for_stage(stage, k, width, stage_seed(cfg.seed, stage))?
                    }
                    Err(e) => {
                        return Err(Error::State(format!(
                            "fine-tuning needs pretrained checkpoints ({e}); pass allow_scratch to start from fresh weights"
                        )))
                    }
                };
                nets.push(net);
            }
            let mut it = nets.into_iter();
            let mut next = || it.next().expect("four stages");
            Ok(Model::Pipeline(PipelineNet::from_stages(next(), next(), next(), next())?))
        }
    }
}

fn run_to_end(cfg: TrainConfig, resume: bool) -> Result<Trainer> {
    let mut t = Trainer::new(cfg, resume)?;
    t.run()?;
    Ok(t)
}

/// Pretrains one pipeline stage on its (input, target) pairs.
pub fn pretrain_stage(stage: NetStage, cfg: &TrainConfig, resume: bool) -> Result<(ModuleNet, TrainState)> {
    let run = match stage {
        NetStage::Background => TrainStage::Background,
        NetStage::TextExtract => TrainStage::TextExtract,
        NetStage::Removal => TrainStage::Removal,
        NetStage::Reconstruct => TrainStage::Reconstruct,
        NetStage::Baseline => return Err(Error::Config("the baseline is trained with train_baseline".into())),
    };
    let t = run_to_end(TrainConfig { stage: run, ..cfg.clone() }, resume)?;
    match t.model {
        Model::Single(net) => Ok((net, t.state)),
        Model::Pipeline(_) => unreachable!("single-stage run"),
    }
}

/// Fine-tunes all four stages end to end on the final-output MSE.
pub fn finetune_pipeline(cfg: &TrainConfig, resume: bool) -> Result<(PipelineNet, TrainState)> {
    let t = run_to_end(TrainConfig { stage: TrainStage::Finetune, ..cfg.clone() }, resume)?;
    match t.model {
        Model::Pipeline(p) => Ok((p, t.state)),
        Model::Single(_) => unreachable!("pipeline run"),
    }
}

/// Trains the single conditioned U-Net on (overlaid, condition) -> ideal pairs.
pub fn train_baseline(cfg: &TrainConfig, resume: bool) -> Result<(ModuleNet, TrainState)> {
    let t = run_to_end(TrainConfig { stage: TrainStage::Baseline, ..cfg.clone() }, resume)?;
    match t.model {
        Model::Single(net) => Ok((net, t.state)),
        Model::Pipeline(_) => unreachable!("single-stage run"),
    }
}
