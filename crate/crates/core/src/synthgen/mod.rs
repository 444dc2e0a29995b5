//! Synthetic scene-text generation with selective-removal ground truth.
//!
//! A [`Synthesizer`] overlays rendered words on text-free backgrounds and produces the
//! background / overlaid / text layer / stripped layer / ideal tuple for one target word.

mod background;
mod config;
mod dataset;
mod fonts;
mod layout;
mod render;
mod sample;
mod vocab;

pub use background::{procedural_background, procedural_size};
pub use config::SynthConfig;
pub use dataset::{
    read_dataset, sample_id, write_dataset, Dataset, DatasetKind, DatasetMeta, DatasetWriter, SampleAnnotation,
    DATASET_SCHEMA_VERSION, META_FILE, SAMPLES_DIR,
};
pub use fonts::{builtin_font_names, FontSet, WordBitmap};
pub use layout::WordPlacement;
pub use sample::{augment_background, SceneSample, TextOnlySample};
pub use vocab::{ConditionVector, Vocabulary, DEFAULT_CANDIDATES, DEFAULT_DISTRACTORS};

use crate::error::Result;

/// Word layout, rendering and sample assembly for one vocabulary and config.
#[derive(Clone, Debug)]
pub struct Synthesizer {
    cfg: SynthConfig,
    fonts: FontSet,
    vocab: Vocabulary,
}

impl Synthesizer {
    pub fn new(cfg: SynthConfig, vocab: Vocabulary) -> Result<Self> {
        cfg.validate()?;
        let fonts = FontSet::load(&cfg.font_set)?;
        Ok(Self { cfg, fonts, vocab })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn fonts(&self) -> &FontSet {
        &self.fonts
    }
}
