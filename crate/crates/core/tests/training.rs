mod common;

use std::fs;

use common::{scene_dataset, text_only_dataset, TINY};
use sstr::nets::{NetStage, PipelineNet};
use sstr::training::{
    checkpoint_load, checkpoint_save, finetune_pipeline, load_pipeline, pretrain_stage, read_log, split_dataset,
    train_baseline, write_split, Model, TrainConfig, TrainStage, Trainer,
};
use sstr::Error;

fn cfg(stage: TrainStage, data: &std::path::Path, out: &std::path::Path) -> TrainConfig {
    let mut c = TrainConfig::new(stage, data, out);
    c.side = 64;
    c.base_channels = TINY.base_channels;
    c.max_channels = TINY.max_channels;
    c.batch_size = 2;
    c.max_steps = 4;
    c.eval_every = 2;
    c.lr = 1e-3;
    c.seed = 11;
    c
}

fn flat_params(model: &Model) -> Vec<Vec<f32>> {
    model
        .nets()
        .iter()
        .flat_map(|n| n.net.params().into_iter().map(|p| p.value.clone()).collect::<Vec<_>>())
        .collect()
}

#[test]
fn zero_learning_rate_leaves_parameters_and_loss_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    scene_dataset(&data, 64, 4, 2, 1);
    let mut c = cfg(TrainStage::Background, &data, &dir.path().join("ck"));
    c.lr = 0.0;
    c.batch_size = 4;
    let mut t = Trainer::new(c, false).unwrap();
    let before = flat_params(&t.model);
    let l0 = t.train_loss().unwrap();
    t.step().unwrap();
    t.step().unwrap();
    assert_eq!(l0, t.train_loss().unwrap());
    assert_eq!(before, flat_params(&t.model));
}

#[test]
fn resume_reproduces_next_loss() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    scene_dataset(&data, 64, 6, 3, 2);
    let c = cfg(TrainStage::Reconstruct, &data, &dir.path().join("ck"));

    let mut straight = Trainer::new(c.clone(), false).unwrap();
    let losses: Vec<f64> = (0..5).map(|_| straight.step().unwrap()).collect();

    let mut first = Trainer::new(c.clone(), false).unwrap();
    for _ in 0..3 {
        first.step().unwrap();
    }
    first.save().unwrap();
    let mut resumed = Trainer::new(c, true).unwrap();
    assert_eq!(resumed.state.step, 3);
    for want in &losses[3..] {
        let got = resumed.step().unwrap();
        assert!((got - want).abs() <= 1e-6, "{got} vs {want}");
    }
    assert_eq!(flat_params(&resumed.model), flat_params(&straight.model));
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    scene_dataset(&data, 64, 4, 2, 3);
    let a = train_baseline(&cfg(TrainStage::Baseline, &data, &dir.path().join("a")), false).unwrap();
    let b = train_baseline(&cfg(TrainStage::Baseline, &data, &dir.path().join("b")), false).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1.last_loss, b.1.last_loss);
    let la = read_log(&dir.path().join("a/baseline_log.csv")).unwrap();
    let lb = read_log(&dir.path().join("b/baseline_log.csv")).unwrap();
    assert_eq!(la, lb);
    assert_eq!(la.len(), 4);
    assert_eq!(la.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    scene_dataset(&data, 64, 4, 2, 4);
    let mut t = Trainer::new(cfg(TrainStage::TextExtract, &data, &dir.path().join("ck")), false).unwrap();
    t.step().unwrap();
    t.step().unwrap();
    checkpoint_save(dir.path().join("ck"), &t.model, &t.optim, &t.state).unwrap();
    let (model, optim, state) = checkpoint_load(dir.path().join("ck"), TrainStage::TextExtract).unwrap();
    assert_eq!(model, t.model);
    assert_eq!(optim.m, t.optim.m);
    assert_eq!(optim.v, t.optim.v);
    assert_eq!(state, t.state);
    let manifest = sstr::nets::checkpoint::CheckpointManifest::load(dir.path().join("ck")).unwrap();
    assert_eq!(manifest.stage(NetStage::TextExtract).unwrap().step, state.step);
    assert!(fs::read_to_string(dir.path().join("ck/manifest.json")).unwrap().contains("\"text_extract\""));

    let missing = checkpoint_load(dir.path().join("nowhere"), TrainStage::TextExtract);
    assert!(matches!(missing, Err(Error::State(_))));
}

#[test]
fn pretraining_one_stage_leaves_others_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let ck = dir.path().join("ck");
    scene_dataset(&data, 64, 4, 2, 5);
    pretrain_stage(NetStage::Reconstruct, &cfg(TrainStage::Reconstruct, &data, &ck), false).unwrap();
    let before = fs::read(ck.join("reconstruct.bin")).unwrap();
    pretrain_stage(NetStage::Background, &cfg(TrainStage::Background, &data, &ck), false).unwrap();
    assert_eq!(before, fs::read(ck.join("reconstruct.bin")).unwrap());
}

#[test]
fn removal_accepts_text_only_sets_and_others_reject_them() {
    let dir = tempfile::tempdir().unwrap();
    let text = dir.path().join("text");
    text_only_dataset(&text, 64, 4, 6);
    let ck = dir.path().join("ck");
    let (net, state) = pretrain_stage(NetStage::Removal, &cfg(TrainStage::Removal, &text, &ck), false).unwrap();
    assert_eq!(net.stage, NetStage::Removal);
    assert_eq!(state.step, 4);
    let err = pretrain_stage(NetStage::Background, &cfg(TrainStage::Background, &text, &ck), false);
    assert!(matches!(err, Err(Error::Dataset(_))));
}

#[test]
fn finetune_requires_pretrained_unless_scratch() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    scene_dataset(&data, 64, 4, 2, 7);
    let c = cfg(TrainStage::Finetune, &data, &dir.path().join("ck"));
    assert!(matches!(finetune_pipeline(&c, false), Err(Error::State(_))));
    let c = TrainConfig { allow_scratch: true, ..c };
    let (p, state) = finetune_pipeline(&c, false).unwrap();
    assert_eq!(state.step, 4);
    let (loaded, m) = load_pipeline(dir.path().join("ck")).unwrap();
    assert_eq!(loaded, p);
    assert_eq!(m.candidates, vec!["ALPHA".to_string(), "BETA".to_string()]);
}

#[test]
fn finetune_moves_every_stage_unless_frozen() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    scene_dataset(&data, 64, 4, 2, 8);
    let mut c = cfg(TrainStage::Finetune, &data, &dir.path().join("ck"));
    c.allow_scratch = true;
    let start = PipelineNet::<f32>::new(2, TINY, c.seed).unwrap();

    let mut t = Trainer::new(c.clone(), false).unwrap();
    assert_eq!(t.model, Model::Pipeline(start.clone()));
    for _ in 0..100 {
        t.step().unwrap();
    }
    let Model::Pipeline(p) = &t.model else { unreachable!() };
    for s in NetStage::PIPELINE {
        let before = start.stage(s).net.params();
        let after = p.stage(s).net.params();
        let delta: f32 = before
            .iter()
            .zip(&after)
            .flat_map(|(a, b)| a.value.iter().zip(&b.value).map(|(x, y)| (x - y).abs()))
            .sum();
        assert!(delta > 0.0, "{} did not move", s.name());
    }

    c.freeze = NetStage::PIPELINE.to_vec();
    let mut t = Trainer::new(c, false).unwrap();
    let batch_all: Vec<usize> = (0..t.train.len()).collect();
    let l0 = t.batch_loss(&t.train.batch(&batch_all)).unwrap();
    for _ in 0..3 {
        t.step().unwrap();
    }
    assert_eq!(l0, t.batch_loss(&t.train.batch(&batch_all)).unwrap());
    assert_eq!(t.model, Model::Pipeline(start));
}

#[test]
fn aux_losses_add_terms() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    scene_dataset(&data, 64, 2, 2, 9);
    let mut c = cfg(TrainStage::Finetune, &data, &dir.path().join("ck"));
    c.allow_scratch = true;
    let plain = Trainer::new(c.clone(), false).unwrap();
    c.aux_losses = true;
    let aux = Trainer::new(c, false).unwrap();
    assert!(aux.train_loss().unwrap() > plain.train_loss().unwrap());
}

#[test]
fn small_steps_rarely_increase_loss() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    scene_dataset(&data, 64, 4, 2, 10);
    let mut c = cfg(TrainStage::Background, &data, &dir.path().join("ck"));
    c.batch_size = 4;
    c.lr = 1e-5;
    let mut passes = 0;
    for trial in 0..100u64 {
        c.seed = trial;
        let mut t = Trainer::new(c.clone(), false).unwrap();
        let all: Vec<usize> = (0..4).collect();
        let before = t.batch_loss(&t.train.batch(&all)).unwrap();
        t.step().unwrap();
        let after = t.batch_loss(&t.train.batch(&all)).unwrap();
        assert!(before >= 0.0 && after >= 0.0);
        if after <= 1.1 * before {
            passes += 1;
        }
    }
    assert!(passes >= 95, "{passes}/100");
}

#[test]
fn training_uses_the_train_split_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    scene_dataset(&data, 64, 24, 12, 12);
    let split = split_dataset(&data, 0.8, 0).unwrap();
    assert!(!split.val.is_empty());
    write_split(&data, &split).unwrap();
    let c = cfg(TrainStage::Background, &data, &dir.path().join("ck"));
    let mut t = Trainer::new(c, false).unwrap();
    assert_eq!(t.train.len(), split.train.len());
    assert_eq!(t.val.as_ref().unwrap().len(), split.val.len());
    t.run().unwrap();
    let log = read_log(&dir.path().join("ck/background_log.csv")).unwrap();
    assert!(log[1].2.is_some() && log[0].2.is_none());
    assert!(dir.path().join("ck/best/manifest.json").exists());
}

#[test]
fn wrong_side_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    scene_dataset(&data, 64, 2, 2, 13);
    let mut c = cfg(TrainStage::Background, &data, &dir.path().join("ck"));
    c.side = 128;
    assert!(matches!(Trainer::new(c, false), Err(Error::Config(_))));
}
