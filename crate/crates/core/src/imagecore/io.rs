use std::path::Path;

use image::{RgbImage, RgbaImage};

use super::image::Image;
use crate::error::{Error, Result};

#[inline]
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[inline]
pub fn dequantize(v: u8) -> f32 {
    v as f32 / 255.0
}

/// Writes an RGB (`C = 3`) or RGBA (`C = 4`) image as 8-bit PNG.
pub fn save_image<const C: usize>(path: impl AsRef<Path>, img: &Image<C>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let mut buf = Vec::with_capacity(C * img.pixel_count());
    for y in 0..img.height() {
        for x in 0..img.width() {
            for c in 0..C {
                buf.push(quantize(img.get(c, x, y)));
            }
        }
    }
    let res = match C {
        3 => RgbImage::from_raw(w, h, buf).map(|i| i.save(path)),
        4 => RgbaImage::from_raw(w, h, buf).map(|i| i.save(path)),
        _ => return Err(Error::Config(format!("cannot encode {C}-channel image"))),
    };
    match res {
        Some(Ok(())) => Ok(()),
        Some(Err(source)) => Err(Error::Image {
            path: path.to_path_buf(),
            source,
        }),
        None => Err(Error::Dimension("raw buffer size mismatch".into())),
    }
}

/// Reads a raster file, converting to `C` channels (3 = RGB, 4 = RGBA).
pub fn load_image<const C: usize>(path: impl AsRef<Path>) -> Result<Image<C>> {
    let path = path.as_ref();
    let dynimg = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let raw: Vec<u8> = match C {
        3 => dynimg.to_rgb8().into_raw(),
        4 => dynimg.to_rgba8().into_raw(),
        _ => return Err(Error::Config(format!("cannot decode into {C} channels"))),
    };
    let n = w * h;
    let mut data = vec![0.0f32; C * n];
    for (i, px) in raw.chunks_exact(C).enumerate() {
        for c in 0..C {
            data[c * n + i] = dequantize(px[c]);
        }
    }
    Image::from_planes(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::{ImageRgb, TextLayerRgba};
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        save_image(&p, &ImageRgb::filled(9, 8, 0.5).unwrap()).unwrap();
        let back: ImageRgb = load_image(&p).unwrap();
        assert_eq!((back.width(), back.height()), (9, 8));
        assert!(back.data().iter().all(|v| (v - 0.5).abs() <= 1.0 / 255.0));
    }

    #[test]
    fn binary_alpha_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.png");
        let mut layer = TextLayerRgba::zeros(8, 8).unwrap();
        layer.set_pixel(2, 2, [0.3, 0.6, 0.9, 1.0]);
        save_image(&p, &layer).unwrap();
        let back: TextLayerRgba = load_image(&p).unwrap();
        assert_eq!(back.plane(3), layer.plane(3));
    }

    #[test]
    fn random_round_trip_within_half_step() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.png");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f32> = (0..4 * 32 * 24).map(|_| rng.gen()).collect();
        let img = TextLayerRgba::from_planes(32, 24, data).unwrap();
        save_image(&p, &img).unwrap();
        let back: TextLayerRgba = load_image(&p).unwrap();
        let max_err = img.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(max_err <= 1.0 / 510.0 + 1e-6, "{max_err}");
    }

    #[test]
    fn corrupt_file_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"not a png").unwrap();
        assert!(load_image::<3>(&p).is_err());
        assert!(load_image::<3>(dir.path().join("missing.png")).is_err());
    }
}
