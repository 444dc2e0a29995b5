use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Synthesizer;
use crate::error::{Error, Result};
use crate::imagecore::{ImageRgb, PixelBox};
use crate::rng::{domain, stream};

/// One rendered word and everything needed to re-render it pixel-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordPlacement {
    pub word: String,
    #[serde(rename = "box")]
    pub bbox: PixelBox,
    pub font_id: usize,
    pub font_px: f32,
    pub color: [f32; 3],
    pub rotation: f32,
    pub is_candidate: bool,
    pub is_target: bool,
}

const COLOR_TRIES: usize = 100;
const MIN_FONT_PX: f32 = 6.0;

impl Synthesizer {
    /// Samples a non-overlapping word layout inside `content`.
    ///
    /// Candidates are placed before distractors; a word that finds no free spot within
    /// `max_tries` positions is dropped, and a word larger than `content` is drawn smaller.
    /// When `background` is given, word colors keep `min_color_contrast` away from the mean
    /// background color under the box.
    pub fn sample_layout(
        &self,
        content: PixelBox,
        seed: u64,
        background: Option<&ImageRgb>,
    ) -> Result<Vec<WordPlacement>> {
        let cfg = &self.cfg;
        let mut rng = stream(seed, domain::LAYOUT, 0);
        let n_cand = rng.gen_range(cfg.candidates_min..=cfg.candidates_max);
        let n_dist = if self.vocab.distractors().is_empty() {
            0
        } else {
            rng.gen_range(cfg.distractors_min..=cfg.distractors_max)
        };
        let mut words: Vec<(&str, bool)> = Vec::with_capacity(n_cand + n_dist);
        for _ in 0..n_cand {
            words.push((self.vocab.candidates().choose(&mut rng).expect("K >= 1"), true));
        }
        for _ in 0..n_dist {
            words.push((self.vocab.distractors().choose(&mut rng).expect("nonempty"), false));
        }

        let mut placed: Vec<WordPlacement> = Vec::new();
        for (word, is_candidate) in words {
            let font_id = rng.gen_range(0..self.fonts.len());
            let font_px = if cfg.font_px_max > cfg.font_px_min {
                rng.gen_range(cfg.font_px_min..cfg.font_px_max)
            } else {
                cfg.font_px_min
            };
            let rotation = if cfg.rotation_max_deg > 0.0 {
                rng.gen_range(-cfg.rotation_max_deg..cfg.rotation_max_deg)
            } else {
                0.0
            };
            let Some(mut bitmap) = self.fonts.rasterize(font_id, word, font_px, rotation)? else {
                continue;
            };
            let mut font_px = font_px;
            if bitmap.width > content.w || bitmap.height > content.h {
                // shrink words that are too large for a narrow content area
                let fit = (content.w as f32 / bitmap.width as f32).min(content.h as f32 / bitmap.height as f32);
                font_px = (font_px * fit * 0.95).floor();
                if font_px < MIN_FONT_PX {
                    continue;
                }
                match self.fonts.rasterize(font_id, word, font_px, rotation)? {
                    Some(b) if b.width <= content.w && b.height <= content.h => bitmap = b,
                    _ => continue,
                }
            }
            let gap = cfg.box_gap;
            let mut spot = None;
            for _ in 0..cfg.max_tries {
                let x = content.x + rng.gen_range(0..=content.w - bitmap.width);
                let y = content.y + rng.gen_range(0..=content.h - bitmap.height);
                let b = PixelBox::new(x, y, bitmap.width, bitmap.height);
                let grown = PixelBox::new(
                    x.saturating_sub(gap),
                    y.saturating_sub(gap),
                    b.w + 2 * gap,
                    b.h + 2 * gap,
                );
                if placed.iter().all(|p| !p.bbox.intersects(&grown)) {
                    spot = Some(b);
                    break;
                }
            }
            let Some(bbox) = spot else { continue };
            let color = sample_color(&mut rng, background, &bbox, cfg.min_color_contrast);
            placed.push(WordPlacement {
                word: word.to_string(),
                bbox,
                font_id,
                font_px,
                color,
                rotation,
                is_candidate,
                is_target: false,
            });
        }
        if !placed.iter().any(|p| p.is_candidate) {
            return Err(Error::Generation(format!(
                "could not place any candidate word in a {}x{} area",
                content.w, content.h
            )));
        }
        Ok(placed)
    }
}

fn sample_color(rng: &mut impl Rng, background: Option<&ImageRgb>, bbox: &PixelBox, min_dist: f32) -> [f32; 3] {
    let mut draw = || -> [f32; 3] { [rng.gen(), rng.gen(), rng.gen()] };
    let Some(bg) = background else {
        return draw();
    };
    let mut mean = [0.0f64; 3];
    for y in bbox.y..bbox.bottom() {
        for x in bbox.x..bbox.right() {
            for (c, m) in mean.iter_mut().enumerate() {
                *m += bg.get(c, x, y) as f64;
            }
        }
    }
    let mean = mean.map(|m| (m / bbox.area() as f64) as f32);
    let mut color = draw();
    for _ in 0..COLOR_TRIES {
        let d2: f32 = color.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2.sqrt() >= min_dist {
            break;
        }
        color = draw();
    }
    color
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{SynthConfig, Vocabulary};

    fn synth(cfg: SynthConfig) -> Synthesizer {
        Synthesizer::new(cfg, Vocabulary::default_countries()).unwrap()
    }

    #[test]
    fn single_candidate_only() {
        let s = synth(SynthConfig {
            candidates_min: 1,
            candidates_max: 1,
            distractors_min: 0,
            distractors_max: 0,
            ..Default::default()
        });
        let p = s.sample_layout(PixelBox::new(0, 0, 128, 128), 3, None).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p[0].is_candidate);
    }

    #[test]
    fn deterministic_for_seed() {
        let s = synth(SynthConfig::default());
        let a = s.sample_layout(PixelBox::new(0, 0, 128, 128), 11, None).unwrap();
        let b = s.sample_layout(PixelBox::new(0, 0, 128, 128), 11, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_canvas_fails() {
        let s = synth(SynthConfig::default());
        let err = s.sample_layout(PixelBox::new(0, 0, 8, 8), 1, None).unwrap_err();
        assert!(matches!(err, Error::Generation(_)));
    }

    #[test]
    fn boxes_pairwise_disjoint_over_many_layouts() {
        let s = synth(SynthConfig {
            distractors_min: 2,
            distractors_max: 6,
            ..Default::default()
        });
        let content = PixelBox::new(0, 16, 128, 96);
        for seed in 0..1000 {
            let p = s.sample_layout(content, seed, None).unwrap();
            let n_cand = p.iter().filter(|w| w.is_candidate).count();
            assert!((1..=3).contains(&n_cand));
            for (i, a) in p.iter().enumerate() {
                assert!(content.contains_box(&a.bbox));
                for b in &p[i + 1..] {
                    // brute force: no pixel shared
                    let shared = (a.bbox.y..a.bbox.bottom())
                        .any(|y| (a.bbox.x..a.bbox.right()).any(|x| b.bbox.contains(x, y)));
                    assert!(!shared, "seed {seed}: {:?} overlaps {:?}", a.bbox, b.bbox);
                }
            }
        }
    }

    #[test]
    fn color_contrast_with_background() {
        let s = synth(SynthConfig {
            min_color_contrast: 0.5,
            ..Default::default()
        });
        let bg = ImageRgb::filled(128, 128, 0.5).unwrap();
        for seed in 0..50 {
            for p in s.sample_layout(PixelBox::new(0, 0, 128, 128), seed, Some(&bg)).unwrap() {
                let d: f32 = p.color.iter().map(|c| (c - 0.5) * (c - 0.5)).sum::<f32>().sqrt();
                assert!(d >= 0.5);
            }
        }
    }
}
