use super::image::{ImageRgb, TextLayerRgba};
use crate::error::{Error, Result};

/// `out = alpha * layer.rgb + (1 - alpha) * bg`, per pixel and channel.
pub fn alpha_composite(bg: &ImageRgb, layer: &TextLayerRgba) -> Result<ImageRgb> {
    if !bg.same_dims(layer) {
        return Err(Error::Dimension(format!(
            "background {}x{} vs layer {}x{}",
            bg.width(),
            bg.height(),
            layer.width(),
            layer.height()
        )));
    }
    let n = bg.pixel_count();
    let alpha = layer.plane(3);
    let mut out = Vec::with_capacity(3 * n);
    for c in 0..3 {
        let b = bg.plane(c);
        let l = layer.plane(c);
        out.extend((0..n).map(|i| alpha[i] * l[i] + (1.0 - alpha[i]) * b[i]));
    }
    ImageRgb::from_planes_clamped(bg.width(), bg.height(), out)
}
