use std::collections::BTreeSet;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;

use super::layout::WordPlacement;
use super::vocab::ConditionVector;
use super::Synthesizer;
use crate::error::Result;
use crate::imagecore::{alpha_composite, resize_with_padding, ImageRgb, PadBox, TextLayerRgba, MIN_SIDE};
use crate::rng::{domain, stream};

/// Random crop (same scale on both axes), horizontal flip and RGB channel permutation.
pub fn augment_background(img: &ImageRgb, crop_scale_min: f32, seed: u64) -> Result<ImageRgb> {
    let mut rng = stream(seed, domain::AUGMENT, 0);
    let (w, h) = (img.width(), img.height());
    let scale = if crop_scale_min < 1.0 { rng.gen_range(crop_scale_min..=1.0) } else { 1.0 };
    let cw = ((w as f32 * scale).round() as usize).clamp(MIN_SIDE.min(w), w);
    let ch = ((h as f32 * scale).round() as usize).clamp(MIN_SIDE.min(h), h);
    let (x0, y0) = (rng.gen_range(0..=w - cw), rng.gen_range(0..=h - ch));
    let flip = rng.gen_bool(0.5);
    let mut perm = [0usize, 1, 2];
    perm.shuffle(&mut rng);
    let mut out = ImageRgb::zeros(cw, ch)?;
    for y in 0..ch {
        for x in 0..cw {
            let sx = if flip { x0 + cw - 1 - x } else { x0 + x };
            let px = img.pixel(sx, y0 + y);
            out.set_pixel(x, y, perm.map(|c| px[c]));
        }
    }
    Ok(out)
}

/// Ground-truth tuple for one scene: background, overlaid image, text layer,
/// stripped text layer and the ideal removal result, plus annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSample {
    pub background_id: String,
    pub background: ImageRgb,
    pub overlaid: ImageRgb,
    pub text_layer: TextLayerRgba,
    pub text_layer_stripped: TextLayerRgba,
    pub ideal: ImageRgb,
    pub placements: Vec<WordPlacement>,
    pub target_word: Option<String>,
    pub condition: ConditionVector,
    pub pad: PadBox,
}

impl SceneSample {
    pub fn side(&self) -> usize {
        self.overlaid.width()
    }

    pub fn target_present(&self) -> bool {
        self.placements.iter().any(|p| p.is_target)
    }
}

/// Text-only pair used to pretrain the removal stage.
#[derive(Clone, Debug, PartialEq)]
pub struct TextOnlySample {
    pub text_layer: TextLayerRgba,
    pub text_layer_stripped: TextLayerRgba,
    pub placements: Vec<WordPlacement>,
    pub target_word: Option<String>,
    pub condition: ConditionVector,
}

impl Synthesizer {
    /// Chooses the condition word: a present candidate with probability `p_present`,
    /// otherwise a candidate missing from the layout (falling back to a present one
    /// when every candidate is placed).
    fn choose_target(&self, placements: &[WordPlacement], seed: u64, domain: u64) -> (String, ConditionVector) {
        let mut rng = stream(seed, domain, 0);
        let present: BTreeSet<&str> = placements
            .iter()
            .filter(|p| p.is_candidate)
            .map(|p| p.word.as_str())
            .collect();
        let absent: Vec<&str> = self
            .vocab
            .candidates()
            .iter()
            .map(String::as_str)
            .filter(|w| !present.contains(w))
            .collect();
        let want_present = rng.gen_bool(self.cfg.p_present);
        let word = if (want_present || absent.is_empty()) && !present.is_empty() {
            *present.iter().choose(&mut rng).expect("nonempty")
        } else {
            *absent.iter().choose(&mut rng).expect("nonempty")
        };
        let cond = self.vocab.condition_for(word).expect("word drawn from vocabulary");
        (word.to_string(), cond)
    }

    /// Builds a full scene tuple from a text-free background image.
    pub fn make_scene_sample(&self, background: &ImageRgb, background_id: &str, seed: u64) -> Result<SceneSample> {
        let side = self.cfg.side;
        let background = if self.cfg.augment_backgrounds {
            augment_background(background, self.cfg.crop_scale_min, seed)?
        } else {
            background.clone()
        };
        let (bg, pad) = resize_with_padding(&background, side)?;
        let mut placements = self.sample_layout(pad.content(), seed, Some(&bg))?;
        let (target, condition) = self.choose_target(&placements, seed, domain::SCENE);
        for p in placements.iter_mut() {
            p.is_target = p.word == target;
        }
        let text_layer = self.render_text_layer(&placements, side)?;
        let text_layer_stripped = self.strip_words(&text_layer, &placements, &target)?;
        let overlaid = alpha_composite(&bg, &text_layer)?;
        let ideal = alpha_composite(&bg, &text_layer_stripped)?;
        Ok(SceneSample {
            background_id: background_id.to_string(),
            background: bg,
            overlaid,
            text_layer,
            text_layer_stripped,
            ideal,
            placements,
            target_word: Some(target),
            condition,
            pad,
        })
    }

    /// Builds a text-only (layer, stripped layer, condition) triple on a transparent canvas.
    pub fn make_text_only_sample(&self, seed: u64) -> Result<TextOnlySample> {
        let side = self.cfg.side;
        let mut placements = self.sample_layout(PadBox::full(side).content(), seed, None)?;
        let (target, condition) = self.choose_target(&placements, seed, domain::TEXT_ONLY);
        for p in placements.iter_mut() {
            p.is_target = p.word == target;
        }
        let text_layer = self.render_text_layer(&placements, side)?;
        let text_layer_stripped = self.strip_words(&text_layer, &placements, &target)?;
        Ok(TextOnlySample {
            text_layer,
            text_layer_stripped,
            placements,
            target_word: Some(target),
            condition,
        })
    }
}
