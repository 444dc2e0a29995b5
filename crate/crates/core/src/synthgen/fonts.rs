use std::path::Path;

use ab_glyph::{point, Font, FontArc, GlyphId, PxScale, ScaleFont};

use crate::error::{Error, Result};

const BUILTIN_PREFIX: &str = "builtin:";

static BUILTINS: [(&str, &[u8]); 5] = [
    ("dejavu-sans", include_bytes!("../../assets/fonts/DejaVuSans.ttf")),
    ("dejavu-sans-bold", include_bytes!("../../assets/fonts/DejaVuSans-Bold.ttf")),
    ("dejavu-serif", include_bytes!("../../assets/fonts/DejaVuSerif.ttf")),
    ("dejavu-serif-bold", include_bytes!("../../assets/fonts/DejaVuSerif-Bold.ttf")),
    ("dejavu-sans-mono", include_bytes!("../../assets/fonts/DejaVuSansMono.ttf")),
];

/// Names of every bundled font, in `builtin:<name>` form.
pub fn builtin_font_names() -> Vec<String> {
    BUILTINS.iter().map(|(n, _)| format!("{BUILTIN_PREFIX}{n}")).collect()
}

/// Binary coverage bitmap of one rendered word, cropped tight to its set pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordBitmap {
    pub width: usize,
    pub height: usize,
    pub mask: Vec<bool>,
}

impl WordBitmap {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

/// Fonts resolved from `builtin:<name>` identifiers or file paths.
#[derive(Clone)]
pub struct FontSet {
    names: Vec<String>,
    fonts: Vec<FontArc>,
}

impl std::fmt::Debug for FontSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FontSet").field("names", &self.names).finish()
    }
}

impl FontSet {
    pub fn load(specs: &[String]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Asset("font set is empty".into()));
        }
        let mut fonts = Vec::with_capacity(specs.len());
        for spec in specs {
            let font = match spec.strip_prefix(BUILTIN_PREFIX) {
                Some(name) => {
                    let (_, bytes) = BUILTINS
                        .iter()
                        .find(|(n, _)| *n == name)
                        .ok_or_else(|| Error::Asset(format!("no bundled font named {name:?}")))?;
                    FontArc::try_from_slice(bytes).map_err(|e| Error::Asset(format!("{spec}: {e}")))?
                }
                None => {
                    let path = Path::new(spec);
                    let bytes = std::fs::read(path)
                        .map_err(|e| Error::Asset(format!("cannot read font file {spec}: {e}")))?;
                    FontArc::try_from_vec(bytes).map_err(|e| Error::Asset(format!("{spec}: {e}")))?
                }
            };
            fonts.push(font);
        }
        Ok(Self {
            names: specs.to_vec(),
            fonts,
        })
    }

    pub fn len(&self) -> usize {
        self.fonts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fonts.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Rasterizes `word` at `px` pixels, rotated by `rotation_deg` (counter-clockwise),
    /// thresholding antialiased coverage at 0.5. Returns `None` when nothing is drawn.
    pub fn rasterize(&self, font_id: usize, word: &str, px: f32, rotation_deg: f32) -> Result<Option<WordBitmap>> {
        let font = self
            .fonts
            .get(font_id)
            .ok_or_else(|| Error::Asset(format!("font id {font_id} not in set of {}", self.fonts.len())))?;
        let scale = PxScale::from(px);
        let scaled = font.as_scaled(scale);
        let ascent = scaled.ascent();
        let margin = 2.0f32;

        let mut glyphs = Vec::new();
        let mut caret = margin;
        let mut prev: Option<GlyphId> = None;
        for ch in word.chars() {
            let id = font.glyph_id(ch);
            if let Some(p) = prev {
                caret += scaled.kern(p, id);
            }
            glyphs.push(id.with_scale_and_position(scale, point(caret, margin + ascent)));
            caret += scaled.h_advance(id);
            prev = Some(id);
        }
        let w = (caret + margin).ceil().max(1.0) as usize;
        let h = (scaled.height() + 2.0 * margin).ceil().max(1.0) as usize;
        let mut coverage = vec![0.0f32; w * h];
        for g in glyphs {
            if let Some(outline) = font.outline_glyph(g) {
                let b = outline.px_bounds();
                outline.draw(|x, y, c| {
                    let xx = b.min.x as i64 + x as i64;
                    let yy = b.min.y as i64 + y as i64;
                    if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h {
                        let v = &mut coverage[yy as usize * w + xx as usize];
                        *v = (*v + c).min(1.0);
                    }
                });
            }
        }

        let (rw, rh, sample): (usize, usize, Box<dyn Fn(usize, usize) -> f32>) = if rotation_deg == 0.0 {
            (w, h, Box::new(|x, y| coverage[y * w + x]))
        } else {
            let theta = rotation_deg.to_radians();
            let (s, c) = theta.sin_cos();
            let (cx, cy) = (w as f32 / 2.0, h as f32 / 2.0);
            let rw = (w as f32 * c.abs() + h as f32 * s.abs()).ceil() as usize + 2;
            let rh = (w as f32 * s.abs() + h as f32 * c.abs()).ceil() as usize + 2;
            let (rcx, rcy) = (rw as f32 / 2.0, rh as f32 / 2.0);
            let cov = &coverage;
            (
                rw,
                rh,
                Box::new(move |x, y| {
                    // inverse rotation of the output pixel center into source space
                    let dx = x as f32 + 0.5 - rcx;
                    let dy = y as f32 + 0.5 - rcy;
                    let sx = c * dx - s * dy + cx - 0.5;
                    let sy = s * dx + c * dy + cy - 0.5;
                    bilinear(cov, w, h, sx, sy)
                }),
            )
        };

        let mut mask = vec![false; rw * rh];
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..rh {
            for x in 0..rw {
                if sample(x, y) >= 0.5 {
                    mask[y * rw + x] = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        if x0 == usize::MAX {
            return Ok(None);
        }
        let (bw, bh) = (x1 - x0, y1 - y0);
        let mut tight = Vec::with_capacity(bw * bh);
        for y in y0..y1 {
            tight.extend_from_slice(&mask[y * rw + x0..y * rw + x1]);
        }
        Ok(Some(WordBitmap {
            width: bw,
            height: bh,
            mask: tight,
        }))
    }
}

fn bilinear(buf: &[f32], w: usize, h: usize, x: f32, y: f32) -> f32 {
    if x < -1.0 || y < -1.0 || x > w as f32 || y > h as f32 {
        return 0.0;
    }
    let fetch = |xi: i64, yi: i64| -> f32 {
        if xi < 0 || yi < 0 || xi >= w as i64 || yi >= h as i64 {
            0.0
        } else {
            buf[yi as usize * w + xi as usize]
        }
    };
    let (xf, yf) = (x.floor(), y.floor());
    let (tx, ty) = (x - xf, y - yf);
    let (xi, yi) = (xf as i64, yf as i64);
    let top = fetch(xi, yi) * (1.0 - tx) + fetch(xi + 1, yi) * tx;
    let bot = fetch(xi, yi + 1) * (1.0 - tx) + fetch(xi + 1, yi + 1) * tx;
    top * (1.0 - ty) + bot * ty
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_load() {
        let set = FontSet::load(&builtin_font_names()).unwrap();
        assert_eq!(set.len(), 5);
        for id in 0..set.len() {
            let bm = set.rasterize(id, "Japan", 20.0, 0.0).unwrap().unwrap();
            assert!(bm.count() > 20);
            assert!(bm.width > bm.height);
        }
    }

    #[test]
    fn missing_font_is_asset_error() {
        let err = FontSet::load(&["/nonexistent/font.ttf".to_string()]).unwrap_err();
        assert!(matches!(err, Error::Asset(_)));
        assert!(matches!(FontSet::load(&["builtin:comic".to_string()]), Err(Error::Asset(_))));
        assert!(matches!(FontSet::load(&[]), Err(Error::Asset(_))));
    }

    #[test]
    fn rotation_changes_box() {
        let set = FontSet::load(&builtin_font_names()[..1]).unwrap();
        let flat = set.rasterize(0, "garden", 24.0, 0.0).unwrap().unwrap();
        let tilted = set.rasterize(0, "garden", 24.0, 20.0).unwrap().unwrap();
        assert!(tilted.height > flat.height);
        let ratio = tilted.count() as f64 / flat.count() as f64;
        assert!((0.8..1.2).contains(&ratio), "{ratio}");
        assert_eq!(set.rasterize(0, "   ", 24.0, 0.0).unwrap(), None);
    }
}
