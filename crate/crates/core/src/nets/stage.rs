use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use super::unet::{UNet, UNetSpec};
use crate::error::{Error, Result};
use crate::imagecore::{Image, ImageRgb, TextLayerRgba};
use crate::synthgen::ConditionVector;

/// Which role a network plays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum NetStage {
    Background,
    TextExtract,
    Removal,
    Reconstruct,
    Baseline,
}

impl NetStage {
    pub const PIPELINE: [NetStage; 4] = [
        NetStage::Background,
        NetStage::TextExtract,
        NetStage::Removal,
        NetStage::Reconstruct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NetStage::Background => "background",
            NetStage::TextExtract => "text_extract",
            NetStage::Removal => "removal",
            NetStage::Reconstruct => "reconstruct",
            NetStage::Baseline => "baseline",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [NetStage::Background, NetStage::TextExtract, NetStage::Removal, NetStage::Reconstruct, NetStage::Baseline]
            .into_iter()
            .find(|s| s.name() == name)
    }

    /// `(in_channels, out_channels, conditioned)` contract of the stage.
    pub fn io(self) -> (usize, usize, bool) {
        match self {
            NetStage::Background => (3, 3, false),
            NetStage::TextExtract => (6, 4, false),
            NetStage::Removal => (4, 4, true),
            NetStage::Reconstruct => (7, 3, false),
            NetStage::Baseline => (3, 3, true),
        }
    }
}

/// Channel widths shared by all stage nets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetWidth {
    pub base_channels: usize,
    pub max_channels: usize,
}

impl Default for NetWidth {
    fn default() -> Self {
        Self {
            base_channels: 32,
            max_channels: 256,
        }
    }
}

/// Fixed architecture of each stage for `k` candidate words.
pub fn stage_spec(stage: NetStage, k: usize, width: NetWidth) -> UNetSpec {
    let (in_channels, out_channels, use_film) = stage.io();
    let (depth, blocks) = match stage {
        NetStage::Background => (3, 4),
        NetStage::TextExtract => (4, 0),
        NetStage::Removal => (4, 2),
        NetStage::Reconstruct => (3, 0),
        NetStage::Baseline => (4, 2),
    };
    UNetSpec {
        depth,
        base_channels: width.base_channels,
        max_channels: width.max_channels,
        in_channels,
        out_channels,
        bottleneck_residual_blocks: blocks,
        use_film,
        cond_dim: if use_film { k } else { 0 },
    }
}

/// A U-Net bound to its pipeline role.
#[derive(Clone, Debug, PartialEq)]
pub struct ModuleNet<T = f32> {
    pub stage: NetStage,
    pub net: UNet<T>,
}

impl<T: Scalar> ModuleNet<T> {
    /// Builds a stage net from an explicit spec, checking it against the stage contract.
    pub fn build(stage: NetStage, spec: UNetSpec, seed: u64) -> Result<Self> {
        let (i, o, film) = stage.io();
        if (spec.in_channels, spec.out_channels, spec.use_film) != (i, o, film) {
            return Err(Error::Config(format!(
                "{} stage needs in={i} out={o} film={film}, spec has in={} out={} film={}",
                stage.name(),
                spec.in_channels,
                spec.out_channels,
                spec.use_film
            )));
        }
        Ok(Self {
            stage,
            net: UNet::new(spec, seed)?,
        })
    }

    /// Builds the standard architecture for `stage`.
    pub fn for_stage(stage: NetStage, k: usize, width: NetWidth, seed: u64) -> Result<Self> {
        Self::build(stage, stage_spec(stage, k, width), seed)
    }

    pub fn spec(&self) -> &UNetSpec {
        &self.net.spec
    }

    pub fn cast<U: Scalar>(&self) -> ModuleNet<U> {
        ModuleNet {
            stage: self.stage,
            net: self.net.cast(),
        }
    }

    fn expect_stage(&self, stage: NetStage) -> Result<()> {
        if self.stage != stage {
            return Err(Error::Config(format!(
                "expected a {} net, got {}",
                stage.name(),
                self.stage.name()
            )));
        }
        Ok(())
    }

    pub fn check_condition(&self, cond: &ConditionVector) -> Result<()> {
        if self.net.spec.use_film && cond.k() != self.net.spec.cond_dim {
            return Err(Error::Config(format!(
                "condition has K={} but the net expects K={}",
                cond.k(),
                self.net.spec.cond_dim
            )));
        }
        Ok(())
    }
}

pub fn image_to_tensor<T: Scalar, const C: usize>(img: &Image<C>) -> Tensor<T> {
    Tensor {
        n: 1,
        c: C,
        h: img.height(),
        w: img.width(),
        data: img.data().iter().map(|&v| T::from_f32(v).unwrap()).collect(),
    }
}

pub fn images_to_tensor<T: Scalar, const C: usize>(imgs: &[&Image<C>]) -> Result<Tensor<T>> {
    let items: Vec<Tensor<T>> = imgs.iter().map(|i| image_to_tensor(*i)).collect();
    Tensor::stack(&items)
}

pub fn tensor_to_image<T: Scalar, const C: usize>(t: &Tensor<T>, index: usize) -> Result<Image<C>> {
    if t.c != C {
        return Err(Error::Shape(format!("tensor has {} channels, image needs {C}", t.c)));
    }
    let data = t.sample(index).iter().map(|v| v.to_f32().unwrap()).collect();
    Image::from_planes_clamped(t.w, t.h, data)
}

pub fn conditions_to_vec<T: Scalar>(conds: &[&ConditionVector]) -> Vec<T> {
    conds
        .iter()
        .flat_map(|c| c.as_slice().iter().map(|&v| T::from_f32(v).unwrap()))
        .collect()
}

fn same_dims<const A: usize, const B: usize>(a: &Image<A>, b: &Image<B>) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::Shape(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Predicts the text-free background of `img`.
pub fn background_extract(net: &ModuleNet, img: &ImageRgb) -> Result<ImageRgb> {
    net.expect_stage(NetStage::Background)?;
    let y = net.net.predict(&image_to_tensor(img), None)?;
    tensor_to_image(&y, 0)
}

/// Batched [`background_extract`].
pub fn background_extract_batch(net: &ModuleNet, imgs: &[&ImageRgb]) -> Result<Vec<ImageRgb>> {
    net.expect_stage(NetStage::Background)?;
    let y = net.net.predict(&images_to_tensor(imgs)?, None)?;
    (0..y.n).map(|i| tensor_to_image(&y, i)).collect()
}

/// Extracts the RGBA text layer from the image and its background (channels: image then background).
pub fn text_extract(net: &ModuleNet, img: &ImageRgb, bg: &ImageRgb) -> Result<TextLayerRgba> {
    net.expect_stage(NetStage::TextExtract)?;
    same_dims(img, bg)?;
    let x = Tensor::concat_channels(&image_to_tensor(img), &image_to_tensor(bg))?;
    tensor_to_image(&net.net.predict(&x, None)?, 0)
}

/// Removes the conditioned word from a text layer.
pub fn selective_remove(net: &ModuleNet, layer: &TextLayerRgba, cond: &ConditionVector) -> Result<TextLayerRgba> {
    net.expect_stage(NetStage::Removal)?;
    net.check_condition(cond)?;
    let c = conditions_to_vec::<f32>(&[cond]);
    tensor_to_image(&net.net.predict(&image_to_tensor(layer), Some(&c))?, 0)
}

/// Composes the final image from a background and a text layer (channels: background then layer).
pub fn reconstruct(net: &ModuleNet, bg: &ImageRgb, layer: &TextLayerRgba) -> Result<ImageRgb> {
    net.expect_stage(NetStage::Reconstruct)?;
    same_dims(bg, layer)?;
    let x = Tensor::concat_channels(&image_to_tensor(bg), &image_to_tensor(layer))?;
    tensor_to_image(&net.net.predict(&x, None)?, 0)
}

/// Single conditioned U-Net mapping the overlaid image straight to the removal result.
pub fn baseline_forward(net: &ModuleNet, img: &ImageRgb, cond: &ConditionVector) -> Result<ImageRgb> {
    net.expect_stage(NetStage::Baseline)?;
    net.check_condition(cond)?;
    let c = conditions_to_vec::<f32>(&[cond]);
    tensor_to_image(&net.net.predict(&image_to_tensor(img), Some(&c))?, 0)
}
