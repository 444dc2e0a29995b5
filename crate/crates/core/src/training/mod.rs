//! Per-stage pretraining, end-to-end fine-tuning and the baseline, with resumable checkpoints.

mod config;
mod data;
mod optim;
mod split;
mod state;
mod trainer;

pub use config::{TrainConfig, TrainStage};
pub use data::{scene_pair, stage_channels, text_only_pair, Batch, PairSet, TrainPair};
pub use optim::Adam;
pub use split::{
    read_split, resolve_part, split_dataset, split_groups, write_split, DatasetSplit, SplitPart, SPLIT_FILE,
    VAL_FRACTION,
};
pub use state::{
    append_log, best_dir, checkpoint_load, checkpoint_save, load_model, load_pipeline, load_stage_net, log_file,
    optim_file, read_log, save_model, state_file, Model, TrainState,
};
pub use trainer::{finetune_pipeline, pretrain_stage, train_baseline, Trainer};
