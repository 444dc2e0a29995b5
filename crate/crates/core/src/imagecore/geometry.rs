use serde::{Deserialize, Serialize};

use super::image::Image;
use crate::error::{Error, Result};

/// Every network input side must be a multiple of this (deepest U-Net has 4 stride-2 stages).
pub const SIDE_MULTIPLE: usize = 16;

/// Axis-aligned pixel rectangle, origin top-left.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl PixelBox {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    #[inline]
    pub fn right(&self) -> usize {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn intersects(&self, other: &PixelBox) -> bool {
        self.x < other.right() && other.x < self.right() && self.y < other.bottom() && other.y < self.bottom()
    }

    pub fn contains_box(&self, other: &PixelBox) -> bool {
        other.x >= self.x && other.y >= self.y && other.right() <= self.right() && other.bottom() <= self.bottom()
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }
}

/// Placement of resized content inside a square padded canvas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadBox {
    pub offset_x: usize,
    pub offset_y: usize,
    pub content_w: usize,
    pub content_h: usize,
}

impl PadBox {
    pub fn full(side: usize) -> Self {
        Self {
            offset_x: 0,
            offset_y: 0,
            content_w: side,
            content_h: side,
        }
    }

    pub fn content(&self) -> PixelBox {
        PixelBox::new(self.offset_x, self.offset_y, self.content_w, self.content_h)
    }
}

/// Checks that `side` is usable as a network canvas.
pub fn check_side(side: usize) -> Result<()> {
    if side == 0 || side % SIDE_MULTIPLE != 0 {
        return Err(Error::Config(format!(
            "canvas side {side} is not a positive multiple of {SIDE_MULTIPLE}"
        )));
    }
    Ok(())
}

/// Bilinear resize with half-pixel centers and edge clamping.
///
/// Interpolation is written in lerp form so constant regions stay bit-exact.
pub fn resize_bilinear<const C: usize>(img: &Image<C>, new_w: usize, new_h: usize) -> Result<Image<C>> {
    let (w, h) = (img.width(), img.height());
    if new_w == w && new_h == h {
        return Ok(img.clone());
    }
    let sx = w as f64 / new_w as f64;
    let sy = h as f64 / new_h as f64;
    let taps = |dst: usize, scale: f64, len: usize| -> (usize, usize, f32) {
        let src = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(len - 1);
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, (src - i0 as f64) as f32)
    };
    let xs: Vec<_> = (0..new_w).map(|x| taps(x, sx, w)).collect();
    let ys: Vec<_> = (0..new_h).map(|y| taps(y, sy, h)).collect();
    let mut out = Vec::with_capacity(C * new_w * new_h);
    for c in 0..C {
        let plane = img.plane(c);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let p00 = plane[y0 * w + x0];
                let p10 = plane[y0 * w + x1];
                let p01 = plane[y1 * w + x0];
                let p11 = plane[y1 * w + x1];
                let top = p00 + (p10 - p00) * fx;
                let bot = p01 + (p11 - p01) * fx;
                out.push(top + (bot - top) * fy);
            }
        }
    }
    Image::from_planes_clamped(new_w, new_h, out)
}

/// Scales the longest side to `side` and centers the result on a zero-filled square canvas.
pub fn resize_with_padding<const C: usize>(img: &Image<C>, side: usize) -> Result<(Image<C>, PadBox)> {
    check_side(side)?;
    let (w, h) = (img.width(), img.height());
    let (cw, ch) = if w >= h {
        (side, ((h as f64 * side as f64 / w as f64).round() as usize).clamp(1, side))
    } else {
        (((w as f64 * side as f64 / h as f64).round() as usize).clamp(1, side), side)
    };
    let pad = PadBox {
        offset_x: (side - cw) / 2,
        offset_y: (side - ch) / 2,
        content_w: cw,
        content_h: ch,
    };
    // content may be thinner than MIN_SIDE; resize at least that large then sample the strip
    let scaled = resize_bilinear(img, cw.max(super::MIN_SIDE), ch.max(super::MIN_SIDE))?;
    let mut canvas = Image::<C>::zeros(side, side)?;
    for c in 0..C {
        for y in 0..ch {
            for x in 0..cw {
                canvas.set(c, pad.offset_x + x, pad.offset_y + y, scaled.get(c, x, y));
            }
        }
    }
    Ok((canvas, pad))
}

/// Inverse of [`resize_with_padding`]: crops the content window and resizes it back.
pub fn unpad<const C: usize>(img: &Image<C>, pad: &PadBox, width: usize, height: usize) -> Result<Image<C>> {
    let cw = pad.content_w.max(super::MIN_SIDE).min(img.width() - pad.offset_x);
    let ch = pad.content_h.max(super::MIN_SIDE).min(img.height() - pad.offset_y);
    let crop = img.crop(pad.offset_x, pad.offset_y, cw, ch)?;
    resize_bilinear(&crop, width, height)
}
