use std::fs;
use std::path::{Path, PathBuf};

use super::manifest::RunManifest;
use super::{prepare_out_dir, EvalArgs, InferArgs, Passthrough, Paths, ReportArgs, SplitArg};
use crate::error::{Error, Result};
use crate::evaluation::{
    check_thresholds, default_thresholds, evaluate_sample, read_report, render_comparison, summarize, write_evaluation,
    Evaluation, REPORT_JSON,
};
use crate::imagecore::{load_image, resize_with_padding, save_image, unpad, ImageRgb, Image};
use crate::nets::checkpoint::CheckpointManifest;
use crate::nets::{baseline_forward, sstr_forward, Intermediates, ModuleNet, NetStage, PipelineNet};
use crate::synthgen::{ConditionVector, Dataset, DatasetKind, SceneSample};
use crate::training::{load_pipeline, load_stage_net, resolve_part, SplitPart};

/// A trained model that maps (image, condition) to a removal result.
#[derive(Clone, Debug)]
pub enum Remover {
    Pipeline(PipelineNet),
    Baseline(ModuleNet),
}

impl Remover {
    /// Runs the model on an image at the checkpoint's side length.
    pub fn apply(&self, img: &ImageRgb, cond: &ConditionVector) -> Result<(ImageRgb, Option<Intermediates>)> {
        match self {
            Remover::Pipeline(p) => sstr_forward(p, img, cond).map(|(o, i)| (o, Some(i))),
            Remover::Baseline(n) => baseline_forward(n, img, cond).map(|o| (o, None)),
        }
    }
}

/// Loads the full pipeline when all four stages are present, otherwise the baseline.
pub fn load_remover(dir: &Path) -> Result<(Remover, CheckpointManifest)> {
    let m = CheckpointManifest::load(dir)?;
    if NetStage::PIPELINE.iter().all(|s| m.stage(*s).is_some()) {
        let (p, m) = load_pipeline(dir)?;
        return Ok((Remover::Pipeline(p), m));
    }
    if m.stage(NetStage::Baseline).is_some() {
        let (n, m) = load_stage_net(dir, NetStage::Baseline)?;
        return Ok((Remover::Baseline(n), m));
    }
    Err(Error::State(format!(
        "{} holds neither all four pipeline stages nor a baseline",
        dir.display()
    )))
}

fn condition_for(candidates: &[String], word: &str) -> Result<ConditionVector> {
    match candidates.iter().position(|c| c == word) {
        Some(i) => ConditionVector::one_hot(i, candidates.len()),
        None => Err(Error::Input(format!(
            "unknown target word '{word}'; valid words: {}",
            candidates.join(", ")
        ))),
    }
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_{suffix}.png"))
}

pub fn infer_command(paths: &Paths, a: InferArgs) -> Result<()> {
    let ck = paths.work(&a.checkpoint);
    let (model, manifest) = load_remover(&ck)?;
    let cond = condition_for(&manifest.candidates, &a.target)?;
    let image = paths.work(&a.image);
    let out = paths.work(&a.out);
    let mut outputs = vec![out.clone()];
    if a.dump_intermediates {
        outputs.extend(["background", "text", "stripped"].map(|s| sibling(&out, s)));
    }
    if let Some(p) = outputs.iter().find(|p| p.exists()) {
        if !a.overwrite {
            return Err(Error::Input(format!("{} exists; pass --overwrite to replace it", p.display())));
        }
    }
    let dir = out.parent().map(Path::to_path_buf).unwrap_or_else(|| paths.workdir.clone());
    let config = serde_json::json!({ "target": a.target, "dump_intermediates": a.dump_intermediates });
    let out_refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    let mut m = RunManifest::new("infer", config, None).with_paths(&[&ck, &image], &out_refs);
    m.write(&dir)?;

    let img: ImageRgb = load_image(&image)?;
    let (w, h) = (img.width(), img.height());
    let (padded, pad) = resize_with_padding(&img, manifest.side)?;
    let (result, inter) = model.apply(&padded, &cond)?;
    save_image(&out, &unpad(&result, &pad, w, h)?)?;
    if a.dump_intermediates {
        let inter = inter.ok_or_else(|| Error::Input("the baseline has no intermediate images".into()))?;
        save_image(&outputs[1], &unpad(&inter.background, &pad, w, h)?)?;
        save_image(&outputs[2], &unpad::<4>(&inter.text_layer, &pad, w, h)?)?;
        save_image(&outputs[3], &unpad::<4>(&inter.stripped_layer, &pad, w, h)?)?;
    }
    println!("wrote {}", out.display());
    m.finish(&dir)
}

fn split_part(s: SplitArg) -> SplitPart {
    match s {
        SplitArg::Train => SplitPart::Train,
        SplitArg::Val => SplitPart::Val,
        SplitArg::Test => SplitPart::Test,
        SplitArg::All => SplitPart::All,
    }
}

/// Output of a passthrough oracle or a model for one sample.
fn produce(sample: &SceneSample, source: &Source) -> Result<Image<3>> {
    Ok(match source {
        Source::Passthrough(Passthrough::Ideal) => sample.ideal.clone(),
        Source::Passthrough(Passthrough::Overlaid) => sample.overlaid.clone(),
        Source::Model(m) => m.apply(&sample.overlaid, &sample.condition)?.0,
    })
}

enum Source {
    Passthrough(Passthrough),
    Model(Remover),
}

/// Evaluates a model or passthrough oracle on the selected samples of a dataset.
fn evaluate_dataset(ds: &Dataset, indices: &[usize], source: &Source, thresholds: &[f64], model_id: &str, dataset_id: &str) -> Result<Evaluation> {
    let mut per_sample = Vec::with_capacity(indices.len());
    for (n, &i) in indices.iter().enumerate() {
        let s = ds.load_scene(i)?;
        let mut e = evaluate_sample(i, &s, &produce(&s, source)?)?;
        e.index = i;
        per_sample.push(e);
        if (n + 1) % 100 == 0 {
            log::info!("evaluated {}/{}", n + 1, indices.len());
        }
    }
    if per_sample.is_empty() {
        return Err(Error::Dataset(format!("{dataset_id} selects no samples")));
    }
    summarize(per_sample, thresholds, model_id, dataset_id)
}

pub fn eval_command(paths: &Paths, a: EvalArgs) -> Result<()> {
    let data = paths.data(&a.data);
    let ds = Dataset::open(&data)?;
    if ds.meta().kind != DatasetKind::Scene {
        return Err(Error::Dataset(format!("{} is not a scene dataset", data.display())));
    }
    let thresholds = a.thresholds.clone().unwrap_or_else(default_thresholds);
    check_thresholds(&thresholds)?;
    let part = split_part(a.split);
    let indices = resolve_part(&data, ds.len(), part)?;
    let (source, model_id, ck) = match (&a.checkpoint, a.passthrough) {
        (_, Some(p)) => {
            let name = match p {
                Passthrough::Ideal => "ideal",
                Passthrough::Overlaid => "overlaid",
            };
            (Source::Passthrough(p), name.to_string(), None)
        }
        (Some(c), None) => {
            let ck = paths.work(c);
            let (model, m) = load_remover(&ck)?;
            if m.candidates != ds.meta().candidates || m.side != ds.meta().side {
                return Err(Error::Input(format!(
                    "{} was trained on other candidates or side than {}",
                    ck.display(),
                    data.display()
                )));
            }
            let id = ck.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
            (Source::Model(model), id, Some(ck))
        }
        (None, None) => return Err(Error::Input("pass --checkpoint or --passthrough".into())),
    };
    let model_id = a.model_id.clone().unwrap_or(model_id);
    let part_name = format!("{:?}", a.split).to_lowercase();
    let dataset_id = format!(
        "{}:{part_name}",
        data.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    );
    let out = paths.work(&a.out);
    prepare_out_dir(&out, a.overwrite)?;
    let config = serde_json::json!({
        "model_id": model_id,
        "split": part_name,
        "thresholds": thresholds,
        "passthrough": a.passthrough.map(|p| format!("{p:?}").to_lowercase()),
    });
    let mut inputs = vec![data.as_path()];
    inputs.extend(ck.as_deref());
    let mut m = RunManifest::new("eval", config, None).with_paths(&inputs, &[&out]);
    m.write(&out)?;
    let eval = evaluate_dataset(&ds, &indices, &source, &thresholds, &model_id, &dataset_id)?;
    write_evaluation(&out, &eval)?;
    print!("{}", eval.report.render_table());
    m.finish(&out)
}

pub(super) fn report_command(paths: &Paths, a: ReportArgs) -> Result<()> {
    let reports = a
        .reports
        .iter()
        .map(|p| {
            let p = paths.work(p);
            read_report(if p.is_dir() { p.join(REPORT_JSON) } else { p })
        })
        .collect::<Result<Vec<_>>>()?;
    if reports.windows(2).any(|w| w[0].dataset_id != w[1].dataset_id) {
        log::warn!("reports cover different datasets");
    }
    let refs: Vec<_> = reports.iter().collect();
    let table = render_comparison(&refs);
    print!("{table}");
    if let Some(out) = &a.out {
        let out = paths.work(out);
        fs::write(&out, &table).map_err(|e| Error::io(&out, e))?;
    }
    Ok(())
}
