use std::fs;
use std::path::Path;

use super::manifest::RunManifest;
use super::{apply_overrides, read_table, FinetuneArgs, Paths, PretrainArgs, PretrainStage, TrainArgs};
use crate::error::{Error, Result};
use crate::nets::NetStage;
use crate::training::{best_dir, log_file, optim_file, state_file, TrainConfig, TrainStage, Trainer};

fn path_value(p: &Path) -> toml::Value {
    toml::Value::String(p.to_string_lossy().into_owned())
}

/// Config file, then dedicated flags, then `--set` overrides; paths resolved afterwards.
fn build_config(paths: &Paths, a: &TrainArgs, stage: TrainStage, extra: &[(&str, toml::Value)]) -> Result<TrainConfig> {
    let mut table = read_table(a.config.as_ref().map(|p| paths.work(p)).as_deref())?;
    table.insert("stage".into(), toml::Value::String(stage.name().into()));
    let flags = [
        ("train_data", a.data.as_deref().map(path_value)),
        ("val_data", a.val_data.as_deref().map(path_value)),
        ("out_dir", a.out.as_deref().map(path_value)),
        ("seed", a.seed.map(|s| toml::Value::Integer(s as i64))),
        ("max_steps", a.steps.map(|s| toml::Value::Integer(s as i64))),
        ("lr", a.lr.map(toml::Value::Float)),
    ];
    for (k, v) in flags.into_iter().chain(extra.iter().map(|(k, v)| (*k, Some(v.clone())))) {
        if let Some(v) = v {
            table.insert(k.into(), v);
        }
    }
    apply_overrides(&mut table, &a.set)?;
    if table.get("stage").and_then(|v| v.as_str()) != Some(stage.name()) {
        return Err(Error::Config(format!("this command trains {}; do not override stage", stage.name())));
    }
    let text = toml::to_string(&table).map_err(|e| Error::Config(format!("training config: {e}")))?;
    let mut cfg = TrainConfig::from_toml_str(&text)?;
    cfg.train_data = paths.data(&cfg.train_data);
    cfg.val_data = cfg.val_data.map(|p| paths.data(&p));
    cfg.out_dir = paths.work(&cfg.out_dir);
    cfg.init_dir = cfg.init_dir.map(|p| paths.work(&p));
    Ok(cfg)
}

/// Refuses to clobber an earlier run of the same kind unless resuming or overwriting.
fn prepare_run_dir(cfg: &TrainConfig, a: &TrainArgs) -> Result<()> {
    let run = cfg.stage;
    let owned = [state_file(run), optim_file(run), log_file(run)];
    let exists = owned.iter().any(|f| cfg.out_dir.join(f).exists());
    if exists && !a.resume {
        if !a.overwrite {
            return Err(Error::Input(format!(
                "{} already holds a {} run; pass --resume or --overwrite",
                cfg.out_dir.display(),
                run.name()
            )));
        }
        for f in &owned {
            let p = cfg.out_dir.join(f);
            if p.exists() {
                fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
            }
        }
        let best = best_dir(&cfg.out_dir);
        if best.exists() && run.net_stage().is_none() {
            fs::remove_dir_all(&best).map_err(|e| Error::io(&best, e))?;
        }
    }
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))
}

fn run_training(command: String, cfg: TrainConfig, a: &TrainArgs) -> Result<()> {
    prepare_run_dir(&cfg, a)?;
    let mut trainer = Trainer::new(cfg.clone(), a.resume)?;
    let snapshot = serde_json::to_value(&cfg).expect("config serializes");
    let mut inputs = vec![cfg.train_data.as_path()];
    inputs.extend(cfg.val_data.as_deref());
    if cfg.stage == TrainStage::Finetune {
        inputs.push(cfg.init_dir());
    }
    let mut m = RunManifest::new(command, snapshot, Some(cfg.seed)).with_paths(&inputs, &[&cfg.out_dir]);
    m.write(&cfg.out_dir)?;
    trainer.run()?;
    let state = &trainer.state;
    println!(
        "{}: step {} loss {} best val {}",
        cfg.stage.name(),
        state.step,
        state.last_loss.map_or("-".into(), |l| format!("{l:.6}")),
        state.best_val_loss.map_or("-".into(), |l| format!("{l:.6}"))
    );
    m.finish(&cfg.out_dir)
}

fn net_stage(s: PretrainStage) -> NetStage {
    match s {
        PretrainStage::Background => NetStage::Background,
        PretrainStage::TextExtract => NetStage::TextExtract,
        PretrainStage::Removal => NetStage::Removal,
        PretrainStage::Reconstruct => NetStage::Reconstruct,
    }
}

pub(super) fn pretrain_command(paths: &Paths, a: PretrainArgs) -> Result<()> {
    let stage = net_stage(a.stage);
    let run = TrainStage::from_name(stage.name())?;
    let cfg = build_config(paths, &a.train, run, &[])?;
    run_training(format!("pretrain {}", stage.name()), cfg, &a.train)
}

pub(super) fn finetune_command(paths: &Paths, a: FinetuneArgs) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(init) = &a.init {
        extra.push(("init_dir", path_value(init)));
    }
    if a.allow_scratch {
        extra.push(("allow_scratch", toml::Value::Boolean(true)));
    }
    let cfg = build_config(paths, &a.train, TrainStage::Finetune, &extra)?;
    run_training("finetune".into(), cfg, &a.train)
}

pub(super) fn baseline_command(paths: &Paths, a: TrainArgs) -> Result<()> {
    let cfg = build_config(paths, &a, TrainStage::Baseline, &[])?;
    run_training("train-baseline".into(), cfg, &a)
}
