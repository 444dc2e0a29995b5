use serde::{Deserialize, Serialize};

use super::fonts::builtin_font_names;
use crate::error::{Error, Result};
use crate::imagecore::check_side;

/// Knobs of the synthetic scene-text generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Square canvas side after padding-resize.
    pub side: usize,
    /// `builtin:<name>` identifiers or font file paths.
    pub font_set: Vec<String>,
    pub font_px_min: f32,
    pub font_px_max: f32,
    pub rotation_max_deg: f32,
    pub candidates_min: usize,
    pub candidates_max: usize,
    pub distractors_min: usize,
    pub distractors_max: usize,
    /// Position attempts per word before it is dropped.
    pub max_tries: usize,
    /// Probability that the condition names a candidate present in the image.
    pub p_present: f64,
    /// Minimum RGB L2 distance between word color and the local background mean.
    pub min_color_contrast: f32,
    /// Empty pixels kept between word boxes.
    pub box_gap: usize,
    /// Per-sample random crop, flip and channel permutation of the background.
    pub augment_backgrounds: bool,
    /// Smallest crop side as a fraction of the background side.
    pub crop_scale_min: f32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            side: 128,
            font_set: builtin_font_names(),
            font_px_min: 14.0,
            font_px_max: 26.0,
            rotation_max_deg: 10.0,
            candidates_min: 1,
            candidates_max: 3,
            distractors_min: 1,
            distractors_max: 4,
            max_tries: 50,
            p_present: 0.8,
            min_color_contrast: 0.1,
            box_gap: 1,
            augment_backgrounds: true,
            crop_scale_min: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        check_side(self.side)?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.candidates_min < 1 || self.candidates_min > self.candidates_max || self.candidates_max > 3 {
            return bad("candidate count range must satisfy 1 <= min <= max <= 3");
        }
        if self.distractors_min > self.distractors_max {
            return bad("distractors_min exceeds distractors_max");
        }
        if !(self.font_px_min > 0.0 && self.font_px_min <= self.font_px_max) {
            return bad("font size range invalid");
        }
        if !(0.0..=90.0).contains(&self.rotation_max_deg) {
            return bad("rotation_max_deg must be within [0, 90]");
        }
        if !(0.0..=1.0).contains(&self.p_present) {
            return bad("p_present must be a probability");
        }
        if self.max_tries == 0 {
            return bad("max_tries must be positive");
        }
        if !(0.0..=3f32.sqrt()).contains(&self.min_color_contrast) {
            return bad("min_color_contrast must be within [0, sqrt(3)]");
        }
        if !(self.crop_scale_min > 0.0 && self.crop_scale_min <= 1.0) {
            return bad("crop_scale_min must be within (0, 1]");
        }
        if self.font_set.is_empty() {
            return bad("font_set is empty");
        }
        Ok(())
    }
}
