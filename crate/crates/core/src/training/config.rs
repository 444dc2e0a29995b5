use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::check_side;
use crate::nets::{NetStage, NetWidth};

/// What a training run optimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStage {
    Background,
    TextExtract,
    Removal,
    Reconstruct,
    Finetune,
    Baseline,
}

impl TrainStage {
    pub const PRETRAIN: [TrainStage; 4] = [
        TrainStage::Background,
        TrainStage::TextExtract,
        TrainStage::Removal,
        TrainStage::Reconstruct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrainStage::Background => "background",
            TrainStage::TextExtract => "text_extract",
            TrainStage::Removal => "removal",
            TrainStage::Reconstruct => "reconstruct",
            TrainStage::Finetune => "finetune",
            TrainStage::Baseline => "baseline",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        [
            TrainStage::Background,
            TrainStage::TextExtract,
            TrainStage::Removal,
            TrainStage::Reconstruct,
            TrainStage::Finetune,
            TrainStage::Baseline,
        ]
        .into_iter()
        .find(|s| s.name() == name)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown stage '{name}' (expected background, text_extract, removal, reconstruct, finetune or baseline)"
            ))
        })
    }

    /// The single net trained by this run, or `None` for fine-tuning.
    pub fn net_stage(self) -> Option<NetStage> {
        match self {
            TrainStage::Background => Some(NetStage::Background),
            TrainStage::TextExtract => Some(NetStage::TextExtract),
            TrainStage::Removal => Some(NetStage::Removal),
            TrainStage::Reconstruct => Some(NetStage::Reconstruct),
            TrainStage::Baseline => Some(NetStage::Baseline),
            TrainStage::Finetune => None,
        }
    }
}

/// Training run configuration. Every key is optional in the config file except `stage`,
/// `train_data` and `out_dir`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: TrainStage,
    /// Dataset directory the training pairs are drawn from.
    pub train_data: PathBuf,
    /// Separate validation dataset; when absent the `val` part of `train_data`'s split is used.
    #[serde(default)]
    pub val_data: Option<PathBuf>,
    /// Checkpoint directory written by this run.
    pub out_dir: PathBuf,
    /// Where fine-tuning finds pretrained stage checkpoints (defaults to `out_dir`).
    #[serde(default)]
    pub init_dir: Option<PathBuf>,
    #[serde(default = "default_side")]
    pub side: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_steps")]
    pub max_steps: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_base")]
    pub base_channels: usize,
    #[serde(default = "default_max")]
    pub max_channels: usize,
    /// Fine-tune from fresh weights when pretrained checkpoints are missing.
    #[serde(default)]
    pub allow_scratch: bool,
    /// Stage nets whose parameters are not updated.
    #[serde(default)]
    pub freeze: Vec<NetStage>,
    /// Adds intermediate-output MSE terms to the fine-tuning loss.
    #[serde(default)]
    pub aux_losses: bool,
    /// Train on the `train` part of the dataset's split file when one exists.
    #[serde(default = "default_true")]
    pub use_split: bool,
    /// Caps the number of validation samples (0 = all).
    #[serde(default)]
    pub max_val_samples: usize,
}

fn default_side() -> usize {
    128
}
fn default_batch() -> usize {
    4
}
fn default_steps() -> u64 {
    5000
}
fn default_eval_every() -> u64 {
    500
}
fn default_lr() -> f64 {
    2e-4
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_base() -> usize {
    NetWidth::default().base_channels
}
fn default_max() -> usize {
    NetWidth::default().max_channels
}
fn default_true() -> bool {
    true
}

impl TrainConfig {
    /// Desk-scale defaults for `stage`.
    pub fn new(stage: TrainStage, train_data: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            stage,
            train_data: train_data.into(),
            val_data: None,
            out_dir: out_dir.into(),
            init_dir: None,
            side: default_side(),
            batch_size: default_batch(),
            max_steps: default_steps(),
            eval_every: default_eval_every(),
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            seed: 0,
            base_channels: default_base(),
            max_channels: default_max(),
            allow_scratch: false,
            freeze: Vec::new(),
            aux_losses: false,
            use_split: true,
            max_val_samples: 0,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("training config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn width(&self) -> NetWidth {
        NetWidth {
            base_channels: self.base_channels,
            max_channels: self.max_channels,
        }
    }

    pub fn init_dir(&self) -> &Path {
        self.init_dir.as_deref().unwrap_or(&self.out_dir)
    }

    pub fn validate(&self) -> Result<()> {
        check_side(self.side)?;
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 || self.max_steps == 0 || self.eval_every == 0 {
            return bad("batch_size, max_steps and eval_every must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("lr must be finite and non-negative, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)".into());
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive".into());
        }
        if self.base_channels == 0 || self.max_channels < self.base_channels {
            return bad("need 0 < base_channels <= max_channels".into());
        }
        Ok(())
    }
}
