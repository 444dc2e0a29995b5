use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sstr::cli::{read_run_manifest, RUN_MANIFEST_FILE};
use sstr::evaluation::{read_report, REPORT_SCHEMA};
use sstr::imagecore::{load_image, save_image, ImageRgb, RegionKind};
use sstr::training::read_log;

const TINY_NET: [&str; 8] = [
    "--set",
    "base_channels=4",
    "--set",
    "max_channels=16",
    "--set",
    "side=64",
    "--set",
    "batch_size=2",
];

fn sstr(work: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sstr"))
        .arg("--workdir")
        .arg(work)
        .args(args)
        .env_remove("SSTR_DATA_ROOT")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(work: &Path, args: &[&str]) -> String {
    let o = sstr(work, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(work: &Path, args: &[&str]) -> (i32, String) {
    let o = sstr(work, args);
    (o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stderr).into_owned())
}

/// Small 64 px scene set plus a text-only set in `work`.
fn datasets(work: &Path) {
    ok(work, &["gen-backgrounds", "--out", "bgs", "--count", "6", "--seed", "1", "--size", "80"]);
    let small = ["--set", "side=64", "--set", "font_px_min=10.0", "--set", "font_px_max=14.0"];
    let mut args = vec!["gen-data", "--out", "scenes", "--backgrounds", "bgs", "--count", "12", "--seed", "5"];
    args.extend(small);
    ok(work, &args);
    let mut args = vec!["gen-data", "--out", "text", "--count", "6", "--seed", "6", "--set", "kind=\"text_only\""];
    args.extend(small);
    ok(work, &args);
}

fn ann_files(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(root.join("samples"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path().join("ann.json");
            let bytes = fs::read(&p).unwrap();
            (p.strip_prefix(root).unwrap().to_path_buf(), bytes)
        })
        .collect();
    out.sort();
    out
}

#[test]
fn gen_data_is_deterministic_and_valid() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    datasets(w);
    assert_eq!(fs::read_dir(w.join("scenes/samples")).unwrap().count(), 12);
    assert!(w.join("scenes/split.json").exists());
    let runs = read_run_manifest(&w.join("scenes")).unwrap().unwrap();
    assert_eq!(runs.runs.len(), 1);
    assert_eq!(runs.runs[0].seed, Some(5));
    assert!(runs.runs[0].finished_at.is_some());

    ok(w, &["gen-data", "--out", "again", "--backgrounds", "bgs", "--count", "12", "--seed", "5",
        "--set", "side=64", "--set", "font_px_min=10.0", "--set", "font_px_max=14.0"]);
    assert_eq!(ann_files(&w.join("scenes")), ann_files(&w.join("again")));

    let out = ok(w, &["validate-dataset", "scenes"]);
    assert!(out.contains("12 samples, 0 failures"), "{out}");
    ok(w, &["validate-dataset", "text"]);

    // corrupt one overlaid image
    let p = w.join("scenes/samples/000003/overlaid.png");
    let img: ImageRgb = load_image(&p).unwrap();
    save_image(&p, &ImageRgb::filled(img.width(), img.height(), 0.0).unwrap()).unwrap();
    let (c, err) = code(w, &["validate-dataset", "scenes"]);
    assert_eq!(c, 1);
    assert!(err.contains("sample 000003"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    assert_eq!(code(w, &["pretrain", "--stage", "bogus", "--data", "d", "--out", "o"]).0, 2);
    assert_eq!(code(w, &["no-such-command"]).0, 2);
    assert_eq!(code(w, &["gen-data", "--out", "x", "--set", "typo=1", "--backgrounds", "b"]).0, 2);
    // missing background directory is a runtime failure
    assert_eq!(code(w, &["gen-data", "--out", "x", "--backgrounds", "nowhere"]).0, 1);
    ok(w, &["gen-backgrounds", "--out", "bgs", "--count", "2"]);
    assert_eq!(code(w, &["gen-backgrounds", "--out", "bgs", "--count", "2"]).0, 2);
    ok(w, &["gen-backgrounds", "--out", "bgs", "--count", "3", "--overwrite"]);
    assert_eq!(fs::read_dir(w.join("bgs")).unwrap().count(), 4);
}

#[test]
fn data_root_env_relocates_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    fs::create_dir(w.join("root")).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_sstr"))
        .args(["--workdir", w.to_str().unwrap(), "gen-backgrounds", "--out", "bgs", "--count", "1"])
        .env("SSTR_DATA_ROOT", "root")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(w.join("root/bgs/bg_00000.png").exists());
}

fn train_args<'a>(cmd: &'a [&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = cmd.to_vec();
    v.extend(TINY_NET);
    v.extend(extra);
    v
}

#[test]
fn train_infer_eval_report() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    datasets(w);

    // fine-tuning without pretrained stages fails at runtime
    let (c, err) = code(w, &train_args(&["finetune", "--data", "scenes", "--out", "ck", "--steps", "2"], &[]));
    assert_eq!(c, 1, "{err}");

    for stage in ["background", "text_extract", "reconstruct"] {
        ok(w, &train_args(&["pretrain", "--stage", stage, "--data", "scenes", "--out", "ck", "--steps", "2"], &[]));
    }
    ok(w, &train_args(&["pretrain", "--stage", "removal", "--data", "text", "--out", "ck", "--steps", "2"], &[]));
    let (c, _) = code(w, &train_args(&["pretrain", "--stage", "removal", "--data", "text", "--out", "ck", "--steps", "2"], &[]));
    assert_eq!(c, 2, "clobbering a finished stage needs --overwrite or --resume");
    let runs = read_run_manifest(&w.join("ck")).unwrap().unwrap();
    assert_eq!(runs.runs.len(), 4);

    let ft = ["finetune", "--data", "scenes", "--init", "ck", "--out", "ft"];
    ok(w, &train_args(&ft, &["--steps", "2"]));
    ok(w, &train_args(&ft, &["--steps", "4", "--resume"]));
    let log = read_log(&w.join("ft/finetune_log.csv")).unwrap();
    assert_eq!(log.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 2, 3, 4]);

    ok(w, &train_args(&["train-baseline", "--data", "scenes", "--out", "base", "--steps", "2"], &[]));

    // inference
    let img = ImageRgb::filled(90, 70, 0.6).unwrap();
    save_image(w.join("in.png"), &img).unwrap();
    let (c, err) = code(w, &["infer", "--checkpoint", "ft", "--image", "in.png", "--target", "Atlantis", "--out", "o.png"]);
    assert_eq!(c, 2);
    assert!(err.contains("France") && err.contains("India"), "{err}");
    ok(w, &["infer", "--checkpoint", "ft", "--image", "in.png", "--target", "China", "--out", "out/o.png"]);
    let out: ImageRgb = load_image(w.join("out/o.png")).unwrap();
    assert_eq!((out.width(), out.height()), (90, 70));
    assert_eq!(fs::read_dir(w.join("out")).unwrap().count(), 2, "image plus run manifest");
    ok(w, &["infer", "--checkpoint", "ft", "--image", "in.png", "--target", "China", "--out", "out/o.png",
        "--dump-intermediates", "--overwrite"]);
    let pngs = fs::read_dir(w.join("out")).unwrap().filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "png").count();
    assert_eq!(pngs, 4);
    ok(w, &["infer", "--checkpoint", "base", "--image", "in.png", "--target", "India", "--out", "b.png"]);

    // evaluation with oracle passthroughs
    ok(w, &["eval", "--passthrough", "ideal", "--data", "scenes", "--out", "ev_ideal", "--split", "all"]);
    let r = read_report(w.join("ev_ideal/report.json")).unwrap();
    assert!(r.recall_samples > 0);
    assert!(r.recall.iter().all(|p| p.recall == 100.0));
    assert_eq!(r.region(RegionKind::Target).unwrap().mean_mse, 0.0);
    ok(w, &["eval", "--passthrough", "overlaid", "--data", "scenes", "--out", "ev_over", "--split", "all",
        "--thresholds", "0.001,0.01,0.05"]);
    let r = read_report(w.join("ev_over/report.json")).unwrap();
    assert_eq!(r.recall.len(), 3);
    assert!(r.recall_at(0.01).unwrap() <= 20.0, "{:?}", r.recall);
    assert!(fs::read_to_string(w.join("ev_over/recall_curve.csv")).unwrap().starts_with("threshold,recall\n"));
    let rows = fs::read_to_string(w.join("ev_over/per_sample.csv")).unwrap().lines().count();
    assert_eq!(rows, 13);

    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(w.join("ev_over/report.json")).unwrap()).unwrap();
    assert!(compiled.is_valid(&value));

    ok(w, &["eval", "--checkpoint", "ft", "--data", "scenes", "--out", "ev_ft"]);
    ok(w, &["eval", "--checkpoint", "base", "--data", "scenes", "--out", "ev_base"]);
    let table = ok(w, &["report", "ev_ft", "ev_base", "--out", "cmp.txt"]);
    assert!(table.contains("ft") && table.contains("base") && table.contains("target PSNR (dB)"));
    assert_eq!(fs::read_to_string(w.join("cmp.txt")).unwrap(), table);

    // no split file: the test part cannot be resolved
    fs::remove_file(w.join("scenes/split.json")).unwrap();
    let (c, _) = code(w, &["eval", "--passthrough", "ideal", "--data", "scenes", "--out", "ev_nosplit"]);
    assert_eq!(c, 1);
    assert!(w.join("ev_ft").join(RUN_MANIFEST_FILE).exists());
}

#[test]
fn example_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for name in ["toy_scenes.toml", "toy_text.toml"] {
        let text = fs::read_to_string(dir.join(name)).unwrap();
        let cfg = sstr::cli::GenDataConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.candidates.len(), 2, "{name}");
        assert_eq!(cfg.distractors.len(), 10, "{name}");
    }
    let text = fs::read_to_string(dir.join("toy_train.toml")).unwrap();
    let full = format!("stage = \"finetune\"\ntrain_data = \"toy\"\nout_dir = \"ft\"\n{text}");
    let cfg = sstr::training::TrainConfig::from_toml_str(&full).unwrap();
    assert_eq!((cfg.base_channels, cfg.max_channels), (16, 64));
}
