use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::RunManifest;
use super::{apply_overrides, prepare_out_dir, read_table, GenBackgroundsArgs, GenDataArgs, Paths, ValidateArgs};
use crate::error::{Error, Result};
use crate::imagecore::{alpha_composite, load_image, region_masks, save_image, Image, ImageRgb, PadBox, PixelBox};
use crate::rng::{derive_seed, domain};
use crate::synthgen::{
    procedural_background, procedural_size, Dataset, DatasetKind, DatasetMeta, DatasetWriter, SynthConfig, Synthesizer,
    Vocabulary, WordPlacement, DEFAULT_CANDIDATES, DEFAULT_DISTRACTORS,
};
use crate::training::{split_dataset, write_split};

/// Keys of a generation config that are not generator knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenKeys {
    kind: DatasetKind,
    count: usize,
    seed: u64,
    background_dir: Option<PathBuf>,
    candidates: Vec<String>,
    distractors: Vec<String>,
    split_ratio: f64,
}

impl Default for GenKeys {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Scene,
            count: 100,
            seed: 0,
            background_dir: None,
            candidates: DEFAULT_CANDIDATES.iter().map(|s| s.to_string()).collect(),
            distractors: DEFAULT_DISTRACTORS.iter().map(|s| s.to_string()).collect(),
            split_ratio: 0.8,
        }
    }
}

const GEN_KEYS: [&str; 7] = ["kind", "count", "seed", "background_dir", "candidates", "distractors", "split_ratio"];

/// Flat `gen-data` configuration: dataset keys plus every [`SynthConfig`] key.
#[derive(Clone, Debug, PartialEq)]
pub struct GenDataConfig {
    pub kind: DatasetKind,
    pub count: usize,
    pub seed: u64,
    /// Directory of text-free PNG backgrounds (scene datasets only).
    pub background_dir: Option<PathBuf>,
    pub candidates: Vec<String>,
    pub distractors: Vec<String>,
    /// Fraction of backgrounds assigned to train+val; the rest form the test part.
    pub split_ratio: f64,
    pub synth: SynthConfig,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        Self::from_parts(GenKeys::default(), SynthConfig::default())
    }
}

impl GenDataConfig {
    fn from_parts(k: GenKeys, synth: SynthConfig) -> Self {
        Self {
            kind: k.kind,
            count: k.count,
            seed: k.seed,
            background_dir: k.background_dir,
            candidates: k.candidates,
            distractors: k.distractors,
            split_ratio: k.split_ratio,
            synth,
        }
    }

    pub fn from_table(mut table: toml::Table) -> Result<Self> {
        let mut own = toml::Table::new();
        for key in GEN_KEYS {
            if let Some(v) = table.remove(key) {
                own.insert(key.to_string(), v);
            }
        }
        let keys: GenKeys = own.try_into().map_err(|e| Error::Config(format!("gen-data config: {e}")))?;
        let synth: SynthConfig = table.try_into().map_err(|e| Error::Config(format!("gen-data config: {e}")))?;
        let cfg = Self::from_parts(keys, synth);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_table(text.parse().map_err(|e| Error::Config(format!("gen-data config: {e}")))?)
    }

    pub fn to_table(&self) -> toml::Table {
        let keys = GenKeys {
            kind: self.kind,
            count: self.count,
            seed: self.seed,
            background_dir: self.background_dir.clone(),
            candidates: self.candidates.clone(),
            distractors: self.distractors.clone(),
            split_ratio: self.split_ratio,
        };
        let mut t = toml::Table::try_from(&self.synth).expect("synth config serializes");
        t.extend(toml::Table::try_from(&keys).expect("gen keys serialize"));
        t
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::new(self.candidates.clone(), self.distractors.clone())
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.vocabulary()?;
        if self.count == 0 {
            return Err(Error::Config("count must be positive".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio <= 1.0) {
            return Err(Error::Config("split_ratio must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Text-free backgrounds of a directory: every PNG, sorted by file name, keyed by file stem.
pub fn load_backgrounds(dir: &Path) -> Result<Vec<(String, ImageRgb)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Dataset(format!("background directory {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Dataset(format!("background directory {} has no PNG images", dir.display())));
    }
    files
        .iter()
        .map(|p| {
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((id, load_image(p)?))
        })
        .collect()
}

/// Writes `count` procedural backgrounds as `bg_00000.png`, ... into `out`.
pub fn gen_backgrounds(out: &Path, count: usize, seed: u64, size: usize) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    (0..count)
        .map(|i| {
            let s = derive_seed(seed, domain::BACKGROUND, i as u64);
            let (w, h) = procedural_size(s, size);
            let path = out.join(format!("bg_{i:05}.png"));
            save_image(&path, &procedural_background(s, w, h)?)?;
            Ok(path)
        })
        .collect()
}

/// Generates a dataset into `out` (which must exist); scene sets also get a background-keyed split.
pub fn gen_data(cfg: &GenDataConfig, background_dir: Option<&Path>, out: &Path) -> Result<DatasetMeta> {
    cfg.validate()?;
    let synth = Synthesizer::new(cfg.synth.clone(), cfg.vocabulary()?)?;
    let writer = DatasetWriter::create(out, cfg.kind, synth.vocabulary(), cfg.synth.side, cfg.seed)?;
    let sample_seed = |i: usize| derive_seed(cfg.seed, domain::SAMPLE, i as u64);
    match cfg.kind {
        DatasetKind::Scene => {
            let dir = background_dir.ok_or_else(|| Error::Config("scene datasets need background_dir".into()))?;
            let backgrounds = load_backgrounds(dir)?;
            for i in 0..cfg.count {
                let (id, bg) = &backgrounds[i % backgrounds.len()];
                writer.write_scene(i, &synth.make_scene_sample(bg, id, sample_seed(i))?)?;
            }
            let meta = writer.finish(cfg.count, backgrounds.len().min(cfg.count))?;
            write_split(out, &split_dataset(out, cfg.split_ratio, cfg.seed)?)?;
            Ok(meta)
        }
        DatasetKind::TextOnly => {
            for i in 0..cfg.count {
                writer.write_text_only(i, &synth.make_text_only_sample(sample_seed(i))?)?;
            }
            writer.finish(cfg.count, 0)
        }
    }
}

/// Outcome of [`validate_dataset`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub samples: usize,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Largest error of an 8-bit composite recomputed from 8-bit inputs.
const COMPOSITE_TOL: f32 = 1.5 / 255.0 + 1e-6;

fn max_abs_diff<const C: usize>(a: &Image<C>, b: &Image<C>) -> f32 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

fn inside_any(boxes: &[PixelBox], x: usize, y: usize) -> bool {
    boxes.iter().any(|b| b.contains(x, y))
}

/// Stripped layer equals the full layer outside target boxes and is transparent inside them.
fn check_stripping(
    text: &Image<4>,
    stripped: &Image<4>,
    placements: &[WordPlacement],
    fail: &mut dyn FnMut(String),
) {
    let targets: Vec<PixelBox> = placements.iter().filter(|p| p.is_target).map(|p| p.bbox).collect();
    for y in 0..text.height() {
        for x in 0..text.width() {
            if inside_any(&targets, x, y) {
                if stripped.alpha(x, y) != 0.0 {
                    return fail(format!("stripped layer keeps target pixel ({x}, {y})"));
                }
            } else if text.pixel(x, y) != stripped.pixel(x, y) {
                return fail(format!("stripped layer differs from text layer at non-target pixel ({x}, {y})"));
            }
        }
    }
}

fn check_annotation(
    vocab: &Vocabulary,
    placements: &[WordPlacement],
    target: Option<&str>,
    cond_index: usize,
    pad: &PadBox,
    side: usize,
    fail: &mut dyn FnMut(String),
) {
    let Some(target) = target else {
        return fail("missing target word".into());
    };
    if vocab.candidate_index(target) != Some(cond_index) {
        fail(format!("condition index {cond_index} does not name target '{target}'"));
    }
    if placements.iter().any(|p| p.is_target != (p.word == target)) {
        fail("is_target flags disagree with the target word".into());
    }
    match region_masks(placements.iter().map(|p| (p.bbox, p.is_target)), pad, side) {
        Err(e) => fail(format!("{e}")),
        Ok(m) => {
            let content = pad.content();
            for y in 0..side {
                for x in 0..side {
                    let hits = [m.target.get(x, y), m.nontarget.get(x, y), m.background.get(x, y)]
                        .iter()
                        .filter(|&&b| b)
                        .count();
                    let want = usize::from(content.contains(x, y));
                    if hits != want {
                        return fail(format!("pixel ({x}, {y}) lies in {hits} regions, expected {want}"));
                    }
                }
            }
        }
    }
}

/// Runs the generator oracles over every sample of a dataset on disk.
pub fn validate_dataset(root: &Path) -> Result<ValidationReport> {
    let ds = Dataset::open(root)?;
    let vocab = ds.meta().vocabulary()?;
    let side = ds.meta().side;
    let mut report = ValidationReport { samples: ds.len(), failures: Vec::new() };
    for i in 0..ds.len() {
        let mut fails = Vec::new();
        let mut fail = |m: String| fails.push(m);
        let ann = ds.annotation(i)?;
        match ds.meta().kind {
            DatasetKind::Scene => {
                let s = ds.load_scene(i)?;
                let d = max_abs_diff(&alpha_composite(&s.background, &s.text_layer)?, &s.overlaid);
                if d > COMPOSITE_TOL {
                    fail(format!("overlaid differs from composite(background, text layer) by {d}"));
                }
                let d = max_abs_diff(&alpha_composite(&s.background, &s.text_layer_stripped)?, &s.ideal);
                if d > COMPOSITE_TOL {
                    fail(format!("ideal differs from composite(background, stripped layer) by {d}"));
                }
                check_stripping(&s.text_layer, &s.text_layer_stripped, &s.placements, &mut fail);
                if let Ok(m) = region_masks(s.placements.iter().map(|p| (p.bbox, p.is_target)), &s.pad, side) {
                    let differs = (0..side * side).any(|p| {
                        let (x, y) = (p % side, p / side);
                        !m.target.get(x, y) && s.ideal.pixel(x, y) != s.overlaid.pixel(x, y)
                    });
                    if differs {
                        fail("ideal and overlaid differ outside the target region".into());
                    }
                }
            }
            DatasetKind::TextOnly => {
                let s = ds.load_text_only(i)?;
                check_stripping(&s.text_layer, &s.text_layer_stripped, &s.placements, &mut fail);
            }
        }
        check_annotation(&vocab, &ann.placements, ann.target_word.as_deref(), ann.condition_index, &ann.pad, side, &mut fail);
        report.failures.extend(fails.into_iter().map(|m| format!("sample {}: {m}", ann.id)));
    }
    Ok(report)
}

pub(super) fn gen_backgrounds_command(paths: &Paths, a: GenBackgroundsArgs) -> Result<()> {
    let out = paths.data(&a.out);
    prepare_out_dir(&out, a.overwrite)?;
    let config = serde_json::json!({ "count": a.count, "seed": a.seed, "size": a.size });
    let mut m = RunManifest::new("gen-backgrounds", config, Some(a.seed)).with_paths(&[], &[&out]);
    m.write(&out)?;
    gen_backgrounds(&out, a.count, a.seed, a.size)?;
    log::info!("wrote {} backgrounds to {}", a.count, out.display());
    m.finish(&out)
}

pub(super) fn gen_data_command(paths: &Paths, a: GenDataArgs) -> Result<()> {
    let mut table = read_table(a.config.map(|p| paths.work(&p)).as_deref())?;
    if let Some(s) = a.seed {
        table.insert("seed".into(), toml::Value::Integer(s as i64));
    }
    if let Some(c) = a.count {
        table.insert("count".into(), toml::Value::Integer(c as i64));
    }
    if let Some(b) = &a.backgrounds {
        table.insert("background_dir".into(), toml::Value::String(b.to_string_lossy().into_owned()));
    }
    apply_overrides(&mut table, &a.set)?;
    let cfg = GenDataConfig::from_table(table)?;
    let bg_dir = cfg.background_dir.as_ref().map(|d| paths.data(d));
    if cfg.kind == DatasetKind::Scene && bg_dir.is_none() {
        return Err(Error::Config("scene datasets need --backgrounds or background_dir".into()));
    }
    let out = paths.data(&a.out);
    prepare_out_dir(&out, a.overwrite)?;
    let snapshot = serde_json::to_value(cfg.to_table()).expect("table converts to json");
    let inputs: Vec<&Path> = bg_dir.iter().map(PathBuf::as_path).collect();
    let mut m = RunManifest::new("gen-data", snapshot, Some(cfg.seed)).with_paths(&inputs, &[&out]);
    m.write(&out)?;
    let meta = gen_data(&cfg, bg_dir.as_deref(), &out)?;
    log::info!("wrote {} {:?} samples to {}", meta.count, meta.kind, out.display());
    m.finish(&out)
}

pub(super) fn validate_command(paths: &Paths, a: ValidateArgs) -> Result<()> {
    let root = paths.data(&a.dataset);
    let report = validate_dataset(&root)?;
    for f in &report.failures {
        eprintln!("{f}");
    }
    println!("{}: {} samples, {} failures", root.display(), report.samples, report.failures.len());
    if report.ok() {
        Ok(())
    } else {
        Err(Error::Dataset(format!("{} failed validation", root.display())))
    }
}
