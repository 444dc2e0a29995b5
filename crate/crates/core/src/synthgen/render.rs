use super::layout::WordPlacement;
use super::Synthesizer;
use crate::error::{Error, Result};
use crate::imagecore::TextLayerRgba;

impl Synthesizer {
    /// Draws every placement onto a transparent `canvas` x `canvas` layer with binary alpha.
    pub fn render_text_layer(&self, placements: &[WordPlacement], canvas: usize) -> Result<TextLayerRgba> {
        let mut layer = TextLayerRgba::zeros(canvas, canvas)?;
        for p in placements {
            self.draw_word(&mut layer, p)?;
        }
        Ok(layer)
    }

    fn draw_word(&self, layer: &mut TextLayerRgba, p: &WordPlacement) -> Result<()> {
        let b = p.bbox;
        if b.right() > layer.width() || b.bottom() > layer.height() {
            return Err(Error::Annotation(format!("box {b:?} of {:?} exceeds canvas", p.word)));
        }
        let bitmap = self
            .fonts
            .rasterize(p.font_id, &p.word, p.font_px, p.rotation)?
            .ok_or_else(|| Error::Annotation(format!("{:?} renders no pixels", p.word)))?;
        if (bitmap.width, bitmap.height) != (b.w, b.h) {
            return Err(Error::Annotation(format!(
                "{:?} renders {}x{} but its box is {}x{}",
                p.word, bitmap.width, bitmap.height, b.w, b.h
            )));
        }
        let [r, g, bl] = p.color;
        for y in 0..b.h {
            for x in 0..b.w {
                if bitmap.mask[y * b.w + x] {
                    layer.set_pixel(b.x + x, b.y + y, [r, g, bl, 1.0]);
                }
            }
        }
        Ok(())
    }

    /// Erases every placement whose word equals `target` by re-rendering the others.
    ///
    /// An absent target returns the input unchanged.
    pub fn strip_words(
        &self,
        layer: &TextLayerRgba,
        placements: &[WordPlacement],
        target: &str,
    ) -> Result<TextLayerRgba> {
        if !placements.iter().any(|p| p.word == target) {
            return Ok(layer.clone());
        }
        let kept: Vec<WordPlacement> = placements.iter().filter(|p| p.word != target).cloned().collect();
        if layer.width() != layer.height() {
            return Err(Error::Dimension("text layers are square".into()));
        }
        self.render_text_layer(&kept, layer.width())
    }
}
