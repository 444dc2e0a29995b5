#![allow(dead_code)]

use std::path::Path;

use sstr::nets::NetWidth;
use sstr::synthgen::{
    procedural_background, write_dataset, DatasetKind, DatasetWriter, SceneSample, SynthConfig, Synthesizer,
    Vocabulary,
};

pub const TINY: NetWidth = NetWidth {
    base_channels: 4,
    max_channels: 16,
};

pub fn small_synth(side: usize, vocab: Vocabulary) -> Synthesizer {
    let cfg = SynthConfig {
        side,
        font_px_min: (side as f32 / 6.0).max(9.0),
        font_px_max: (side as f32 / 4.0).max(12.0),
        ..Default::default()
    };
    Synthesizer::new(cfg, vocab).unwrap()
}

pub fn two_word_vocab() -> Vocabulary {
    Vocabulary::from_strs(&["ALPHA", "BETA"], &["cat", "dog", "sun"]).unwrap()
}

/// `n` scene samples cycling through `backgrounds` procedural backgrounds.
pub fn scenes(synth: &Synthesizer, n: usize, backgrounds: usize, seed: u64) -> Vec<SceneSample> {
    let side = synth.config().side;
    (0..n)
        .map(|i| {
            let b = i % backgrounds;
            let bg = procedural_background(seed.wrapping_add(b as u64), side + 16, side).unwrap();
            synth.make_scene_sample(&bg, &format!("bg{b}"), seed.wrapping_mul(31).wrapping_add(i as u64)).unwrap()
        })
        .collect()
}

pub fn scene_dataset(root: &Path, side: usize, n: usize, backgrounds: usize, seed: u64) -> Vec<SceneSample> {
    let synth = small_synth(side, two_word_vocab());
    let s = scenes(&synth, n, backgrounds, seed);
    write_dataset(root, &s, synth.vocabulary(), seed).unwrap();
    s
}

pub fn text_only_dataset(root: &Path, side: usize, n: usize, seed: u64) {
    let synth = small_synth(side, two_word_vocab());
    let w = DatasetWriter::create(root, DatasetKind::TextOnly, synth.vocabulary(), side, seed).unwrap();
    for i in 0..n {
        w.write_text_only(i, &synth.make_text_only_sample(seed + i as u64).unwrap()).unwrap();
    }
    w.finish(n, 0).unwrap();
}

/// Runs the `sstr` binary in `work`; `Err` carries the exit code and both output streams.
pub fn run_cli(work: &Path, args: &[&str]) -> Result<String, String> {
    let o = std::process::Command::new(env!("CARGO_BIN_EXE_sstr"))
        .arg("--workdir")
        .arg(work)
        .args(args)
        .env_remove("SSTR_DATA_ROOT")
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| format!("cannot start sstr: {e}"))?;
    let stdout = String::from_utf8_lossy(&o.stdout).into_owned();
    if o.status.success() {
        Ok(stdout)
    } else {
        Err(format!(
            "sstr {args:?} exited with {:?}\n{stdout}\n{}",
            o.status.code(),
            String::from_utf8_lossy(&o.stderr)
        ))
    }
}
