use rand::Rng;

use crate::error::Result;
use crate::imagecore::ImageRgb;
use crate::rng::{domain, stream};

/// Smooth, text-free synthetic background: a two-color gradient, a few soft
/// color blobs and a faint low-frequency ripple.
pub fn procedural_background(seed: u64, width: usize, height: usize) -> Result<ImageRgb> {
    let mut rng = stream(seed, domain::BACKGROUND, 0);
    let c0: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let c1: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let angle: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let n_blobs = rng.gen_range(2..=5);
    let blobs: Vec<([f32; 2], f32, [f32; 3], f32)> = (0..n_blobs)
        .map(|_| {
            (
                [rng.gen::<f32>(), rng.gen::<f32>()],
                rng.gen_range(0.15..0.45),
                [rng.gen(), rng.gen(), rng.gen()],
                rng.gen_range(0.3..0.8),
            )
        })
        .collect();
    let ripple_freq: f32 = rng.gen_range(1.0..4.0);
    let ripple_amp: f32 = rng.gen_range(0.0..0.04);
    let ripple_phase: f32 = rng.gen_range(0.0..std::f32::consts::TAU);

    let mut img = ImageRgb::zeros(width, height)?;
    let diag = (width.max(height)) as f32;
    for y in 0..height {
        for x in 0..width {
            let u = x as f32 / diag;
            let v = y as f32 / diag;
            let t = ((u - 0.5) * dx + (v - 0.5) * dy + 0.5).clamp(0.0, 1.0);
            let mut px: [f32; 3] = std::array::from_fn(|c| c0[c] + (c1[c] - c0[c]) * t);
            for (center, radius, color, strength) in &blobs {
                let d2 = (u - center[0]).powi(2) + (v - center[1]).powi(2);
                let w = strength * (-d2 / (radius * radius)).exp();
                for c in 0..3 {
                    px[c] += (color[c] - px[c]) * w;
                }
            }
            let r = ripple_amp * (ripple_freq * std::f32::consts::TAU * (u + 0.7 * v) + ripple_phase).sin();
            img.set_pixel(x, y, px.map(|p| p + r));
        }
    }
    Ok(img)
}

/// Background size with aspect ratio drawn in `[3/4, 4/3]` around `base` pixels.
pub fn procedural_size(seed: u64, base: usize) -> (usize, usize) {
    let mut rng = stream(seed, domain::BACKGROUND, 1);
    let ratio: f64 = rng.gen_range(0.75..(4.0 / 3.0));
    let w = (base as f64 * ratio.sqrt()).round() as usize;
    let h = (base as f64 / ratio.sqrt()).round() as usize;
    (w.max(crate::imagecore::MIN_SIDE), h.max(crate::imagecore::MIN_SIDE))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = procedural_background(9, 40, 30).unwrap();
        let b = procedural_background(9, 40, 30).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, procedural_background(10, 40, 30).unwrap());
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
