use serde::{Deserialize, Serialize};

use super::geometry::{PadBox, PixelBox};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Target,
    Nontarget,
    Background,
}

impl RegionKind {
    pub const ALL: [RegionKind; 3] = [RegionKind::Target, RegionKind::Nontarget, RegionKind::Background];

    pub fn name(self) -> &'static str {
        match self {
            RegionKind::Target => "target",
            RegionKind::Nontarget => "nontarget",
            RegionKind::Background => "background",
        }
    }
}

/// Boolean pixel mask tagged with the region it describes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionMask {
    kind: RegionKind,
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl RegionMask {
    pub fn empty(kind: RegionKind, width: usize, height: usize) -> Self {
        Self {
            kind,
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn kind(&self) -> RegionKind {
        self.kind
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn fill_box(&mut self, b: &PixelBox) {
        for y in b.y..b.bottom().min(self.height) {
            for x in b.x..b.right().min(self.width) {
                self.set(x, y, true);
            }
        }
    }
}

/// Target, non-target and background masks of one sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionMasks {
    pub target: RegionMask,
    pub nontarget: RegionMask,
    pub background: RegionMask,
}

impl RegionMasks {
    pub fn get(&self, kind: RegionKind) -> &RegionMask {
        match kind {
            RegionKind::Target => &self.target,
            RegionKind::Nontarget => &self.nontarget,
            RegionKind::Background => &self.background,
        }
    }
}

/// Builds the three region masks from `(box, is_target)` word annotations.
///
/// Target boxes win where they overlap non-target boxes; padding belongs to no region.
pub fn region_masks<I>(words: I, pad: &PadBox, canvas: usize) -> Result<RegionMasks>
where
    I: IntoIterator<Item = (PixelBox, bool)>,
{
    let content = pad.content();
    if content.right() > canvas || content.bottom() > canvas {
        return Err(Error::Annotation(format!("pad box {pad:?} exceeds canvas {canvas}")));
    }
    let mut target = RegionMask::empty(RegionKind::Target, canvas, canvas);
    let mut nontarget = RegionMask::empty(RegionKind::Nontarget, canvas, canvas);
    for (b, is_target) in words {
        if b.w == 0 || b.h == 0 || !content.contains_box(&b) {
            return Err(Error::Annotation(format!(
                "word box {b:?} not inside content area {content:?}"
            )));
        }
        if is_target {
            target.fill_box(&b);
        } else {
            nontarget.fill_box(&b);
        }
    }
    let mut background = RegionMask::empty(RegionKind::Background, canvas, canvas);
    for y in content.y..content.bottom() {
        for x in content.x..content.right() {
            if target.get(x, y) {
                nontarget.set(x, y, false);
            } else if !nontarget.get(x, y) {
                background.set(x, y, true);
            }
        }
    }
    Ok(RegionMasks {
        target,
        nontarget,
        background,
    })
}
