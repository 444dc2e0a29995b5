use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::layout::WordPlacement;
use super::sample::{SceneSample, TextOnlySample};
use super::vocab::{ConditionVector, Vocabulary};
use crate::error::{Error, Result};
use crate::imagecore::{load_image, save_image, Image, PadBox};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

pub const META_FILE: &str = "meta.json";
pub const SAMPLES_DIR: &str = "samples";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Scene,
    TextOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema_version: u32,
    pub kind: DatasetKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub candidates: Vec<String>,
    pub distractors: Vec<String>,
    pub side: usize,
    pub seed: u64,
    pub count: usize,
    pub background_count: usize,
}

impl DatasetMeta {
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::new(self.candidates.clone(), self.distractors.clone())
    }
}

/// Per-sample `ann.json` record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleAnnotation {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_id: Option<String>,
    pub placements: Vec<WordPlacement>,
    pub target_word: Option<String>,
    pub condition_index: usize,
    pub pad: PadBox,
}

pub fn sample_id(index: usize) -> String {
    format!("{index:06}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))
}

fn load_png<const C: usize>(path: PathBuf) -> Result<Image<C>> {
    load_image(&path).map_err(|e| Error::Dataset(format!("{e}")))
}

/// Streams samples of one kind into `root/samples/<id>/` and finishes with `meta.json`.
pub struct DatasetWriter {
    root: PathBuf,
    kind: DatasetKind,
    vocab: Vocabulary,
    side: usize,
    seed: u64,
}

impl DatasetWriter {
    pub fn create(root: impl AsRef<Path>, kind: DatasetKind, vocab: &Vocabulary, side: usize, seed: u64) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let samples = root.join(SAMPLES_DIR);
        fs::create_dir_all(&samples).map_err(|e| Error::io(&samples, e))?;
        Ok(Self {
            root,
            kind,
            vocab: vocab.clone(),
            side,
            seed,
        })
    }

    fn sample_dir(&self, index: usize) -> Result<PathBuf> {
        let dir = self.root.join(SAMPLES_DIR).join(sample_id(index));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    pub fn write_scene(&self, index: usize, s: &SceneSample) -> Result<()> {
        if self.kind != DatasetKind::Scene {
            return Err(Error::Dataset("writer is not a scene dataset".into()));
        }
        let dir = self.sample_dir(index)?;
        save_image(dir.join("bg.png"), &s.background)?;
        save_image(dir.join("overlaid.png"), &s.overlaid)?;
        save_image(dir.join("text.png"), &s.text_layer)?;
        save_image(dir.join("text_stripped.png"), &s.text_layer_stripped)?;
        save_image(dir.join("ideal.png"), &s.ideal)?;
        let ann = SampleAnnotation {
            id: sample_id(index),
            background_id: Some(s.background_id.clone()),
            placements: s.placements.clone(),
            target_word: s.target_word.clone(),
            condition_index: s.condition.index(),
            pad: s.pad,
        };
        write_json(&dir.join("ann.json"), &ann)
    }

    pub fn write_text_only(&self, index: usize, s: &TextOnlySample) -> Result<()> {
        if self.kind != DatasetKind::TextOnly {
            return Err(Error::Dataset("writer is not a text-only dataset".into()));
        }
        let dir = self.sample_dir(index)?;
        save_image(dir.join("text.png"), &s.text_layer)?;
        save_image(dir.join("text_stripped.png"), &s.text_layer_stripped)?;
        let ann = SampleAnnotation {
            id: sample_id(index),
            background_id: None,
            placements: s.placements.clone(),
            target_word: s.target_word.clone(),
            condition_index: s.condition.index(),
            pad: PadBox::full(s.text_layer.width()),
        };
        write_json(&dir.join("ann.json"), &ann)
    }

    pub fn finish(self, count: usize, background_count: usize) -> Result<DatasetMeta> {
        let meta = DatasetMeta {
            schema_version: DATASET_SCHEMA_VERSION,
            kind: self.kind,
            k: self.vocab.k(),
            candidates: self.vocab.candidates().to_vec(),
            distractors: self.vocab.distractors().to_vec(),
            side: self.side,
            seed: self.seed,
            count,
            background_count,
        };
        write_json(&self.root.join(META_FILE), &meta)?;
        Ok(meta)
    }
}

/// Writes scene samples in index order and returns the meta record.
pub fn write_dataset(root: impl AsRef<Path>, samples: &[SceneSample], vocab: &Vocabulary, seed: u64) -> Result<DatasetMeta> {
    let side = samples.first().map(|s| s.side()).unwrap_or(0);
    let w = DatasetWriter::create(root, DatasetKind::Scene, vocab, side, seed)?;
    for (i, s) in samples.iter().enumerate() {
        w.write_scene(i, s)?;
    }
    let backgrounds: std::collections::BTreeSet<&str> = samples.iter().map(|s| s.background_id.as_str()).collect();
    w.finish(samples.len(), backgrounds.len())
}

/// Reads every scene sample of a dataset into memory.
pub fn read_dataset(root: impl AsRef<Path>) -> Result<Vec<SceneSample>> {
    let ds = Dataset::open(root)?;
    (0..ds.len()).map(|i| ds.load_scene(i)).collect()
}

/// Lazily-loaded dataset on disk.
#[derive(Clone, Debug)]
pub struct Dataset {
    root: PathBuf,
    meta: DatasetMeta,
    ids: Vec<String>,
}

impl Dataset {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let meta: DatasetMeta = read_json(&root.join(META_FILE))?;
        if meta.schema_version != DATASET_SCHEMA_VERSION {
            return Err(Error::Dataset(format!(
                "schema version {} (expected {DATASET_SCHEMA_VERSION})",
                meta.schema_version
            )));
        }
        let ids: Vec<String> = (0..meta.count).map(sample_id).collect();
        for id in &ids {
            let dir = root.join(SAMPLES_DIR).join(id);
            if !dir.is_dir() {
                return Err(Error::Dataset(format!("missing sample directory {}", dir.display())));
            }
        }
        Ok(Self { root, meta, ids })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn sample_dir(&self, index: usize) -> PathBuf {
        self.root.join(SAMPLES_DIR).join(&self.ids[index])
    }

    pub fn annotation(&self, index: usize) -> Result<SampleAnnotation> {
        read_json(&self.sample_dir(index).join("ann.json"))
    }

    fn condition(&self, ann: &SampleAnnotation) -> Result<ConditionVector> {
        ConditionVector::one_hot(ann.condition_index, self.meta.k)
            .map_err(|e| Error::Dataset(format!("sample {}: {e}", ann.id)))
    }

    pub fn load_scene(&self, index: usize) -> Result<SceneSample> {
        if self.meta.kind != DatasetKind::Scene {
            return Err(Error::Dataset(format!("{} is not a scene dataset", self.root.display())));
        }
        let dir = self.sample_dir(index);
        let ann = self.annotation(index)?;
        Ok(SceneSample {
            background_id: ann.background_id.clone().unwrap_or_default(),
            background: load_png(dir.join("bg.png"))?,
            overlaid: load_png(dir.join("overlaid.png"))?,
            text_layer: load_png(dir.join("text.png"))?,
            text_layer_stripped: load_png(dir.join("text_stripped.png"))?,
            ideal: load_png(dir.join("ideal.png"))?,
            condition: self.condition(&ann)?,
            placements: ann.placements,
            target_word: ann.target_word,
            pad: ann.pad,
        })
    }

    pub fn load_text_only(&self, index: usize) -> Result<TextOnlySample> {
        let dir = self.sample_dir(index);
        let ann = self.annotation(index)?;
        Ok(TextOnlySample {
            text_layer: load_png(dir.join("text.png"))?,
            text_layer_stripped: load_png(dir.join("text_stripped.png"))?,
            condition: self.condition(&ann)?,
            placements: ann.placements,
            target_word: ann.target_word,
        })
    }

    /// Background identity of every sample (empty for text-only sets).
    pub fn background_ids(&self) -> Result<Vec<String>> {
        (0..self.len())
            .map(|i| Ok(self.annotation(i)?.background_id.unwrap_or_default()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{procedural_background, SynthConfig, Synthesizer};

    fn samples(n: usize) -> (Synthesizer, Vec<SceneSample>) {
        let s = Synthesizer::new(SynthConfig { side: 64, font_px_min: 10.0, font_px_max: 14.0, ..Default::default() }, Vocabulary::default_countries()).unwrap();
        let out = (0..n)
            .map(|i| {
                let bg = procedural_background(i as u64, 80, 64).unwrap();
                s.make_scene_sample(&bg, &format!("bg{i}"), i as u64).unwrap()
            })
            .collect();
        (s, out)
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (s, written) = samples(10);
        let meta = write_dataset(dir.path(), &written, s.vocabulary(), 42).unwrap();
        assert_eq!(meta.count, 10);
        assert_eq!(meta.k, 5);
        let read = read_dataset(dir.path()).unwrap();
        assert_eq!(read.len(), 10);
        for (a, b) in written.iter().zip(&read) {
            assert_eq!(a.placements, b.placements);
            assert_eq!(a.target_word, b.target_word);
            assert_eq!(a.condition, b.condition);
            assert_eq!(a.pad, b.pad);
            assert_eq!(a.background_id, b.background_id);
            for (x, y) in a.overlaid.data().iter().zip(b.overlaid.data()) {
                assert!((x - y).abs() <= 1.0 / 255.0);
            }
            for (x, y) in a.text_layer.data().iter().zip(b.text_layer.data()) {
                assert!((x - y).abs() <= 1.0 / 255.0);
            }
        }
    }

    #[test]
    fn schema_mismatch_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let (s, written) = samples(2);
        write_dataset(dir.path(), &written, s.vocabulary(), 1).unwrap();
        fs::remove_file(dir.path().join("samples/000001/ideal.png")).unwrap();
        let ds = Dataset::open(dir.path()).unwrap();
        assert!(ds.load_scene(0).is_ok());
        assert!(matches!(ds.load_scene(1), Err(Error::Dataset(_))));

        let meta_path = dir.path().join(META_FILE);
        let text = fs::read_to_string(&meta_path).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 99");
        fs::write(&meta_path, text).unwrap();
        assert!(matches!(Dataset::open(dir.path()), Err(Error::Dataset(_))));
        assert!(matches!(Dataset::open(dir.path().join("nope")), Err(Error::Dataset(_))));
    }
}
