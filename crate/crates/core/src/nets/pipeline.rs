use super::stage::{
    conditions_to_vec, image_to_tensor, tensor_to_image, ModuleNet, NetStage, NetWidth,
};
use super::tensor::{Scalar, Tensor};
use super::unet::UNetTape;
use crate::error::{Error, Result};
use crate::imagecore::{ImageRgb, TextLayerRgba};
use crate::rng::{derive_seed, domain};
use crate::synthgen::ConditionVector;

/// Initialization seed of `stage` within a run seeded with `seed`.
pub fn stage_seed(seed: u64, stage: NetStage) -> u64 {
    derive_seed(seed, domain::STAGE, stage as u64)
}

/// The four stage nets chained background -> text extraction -> removal -> reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineNet<T = f32> {
    pub background: ModuleNet<T>,
    pub text_extract: ModuleNet<T>,
    pub removal: ModuleNet<T>,
    pub reconstruct: ModuleNet<T>,
}

/// Internal images of one pipeline run.
#[derive(Clone, Debug, PartialEq)]
pub struct Intermediates {
    pub background: ImageRgb,
    pub text_layer: TextLayerRgba,
    pub stripped_layer: TextLayerRgba,
}

/// Recorded activations of every stage for [`PipelineNet::backward`].
#[derive(Clone, Debug)]
pub struct PipelineTape<T> {
    background: UNetTape<T>,
    text_extract: UNetTape<T>,
    removal: UNetTape<T>,
    reconstruct: UNetTape<T>,
    pub predicted_background: Tensor<T>,
    pub text_layer: Tensor<T>,
    pub stripped_layer: Tensor<T>,
}

/// Optional extra gradients w.r.t. the intermediate outputs.
#[derive(Clone, Debug)]
pub struct AuxGrads<T> {
    pub background: Option<Tensor<T>>,
    pub text_layer: Option<Tensor<T>>,
    pub stripped_layer: Option<Tensor<T>>,
}

impl<T> Default for AuxGrads<T> {
    fn default() -> Self {
        Self {
            background: None,
            text_layer: None,
            stripped_layer: None,
        }
    }
}

/// Per-stage switch, e.g. which stages are frozen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StageMask {
    pub background: bool,
    pub text_extract: bool,
    pub removal: bool,
    pub reconstruct: bool,
}

impl StageMask {
    pub fn all() -> Self {
        Self {
            background: true,
            text_extract: true,
            removal: true,
            reconstruct: true,
        }
    }

    pub fn get(&self, stage: NetStage) -> bool {
        match stage {
            NetStage::Background => self.background,
            NetStage::TextExtract => self.text_extract,
            NetStage::Removal => self.removal,
            NetStage::Reconstruct => self.reconstruct,
            NetStage::Baseline => false,
        }
    }
}

impl<T: Scalar> PipelineNet<T> {
    /// Standard four-stage pipeline; each stage gets its own seed derived from `seed`.
    pub fn new(k: usize, width: NetWidth, seed: u64) -> Result<Self> {
        let build = |stage: NetStage| ModuleNet::for_stage(stage, k, width, stage_seed(seed, stage));
        Self::from_stages(
            build(NetStage::Background)?,
            build(NetStage::TextExtract)?,
            build(NetStage::Removal)?,
            build(NetStage::Reconstruct)?,
        )
    }

    pub fn from_stages(
        background: ModuleNet<T>,
        text_extract: ModuleNet<T>,
        removal: ModuleNet<T>,
        reconstruct: ModuleNet<T>,
    ) -> Result<Self> {
        for (net, want) in [
            (&background, NetStage::Background),
            (&text_extract, NetStage::TextExtract),
            (&removal, NetStage::Removal),
            (&reconstruct, NetStage::Reconstruct),
        ] {
            if net.stage != want {
                return Err(Error::Config(format!(
                    "pipeline slot {} holds a {} net",
                    want.name(),
                    net.stage.name()
                )));
            }
        }
        Ok(Self {
            background,
            text_extract,
            removal,
            reconstruct,
        })
    }

    pub fn k(&self) -> usize {
        self.removal.net.spec.cond_dim
    }

    pub fn stage(&self, stage: NetStage) -> &ModuleNet<T> {
        match stage {
            NetStage::Background => &self.background,
            NetStage::TextExtract => &self.text_extract,
            NetStage::Removal => &self.removal,
            NetStage::Reconstruct => &self.reconstruct,
            NetStage::Baseline => panic!("baseline is not a pipeline stage"),
        }
    }

    pub fn stage_mut(&mut self, stage: NetStage) -> &mut ModuleNet<T> {
        match stage {
            NetStage::Background => &mut self.background,
            NetStage::TextExtract => &mut self.text_extract,
            NetStage::Removal => &mut self.removal,
            NetStage::Reconstruct => &mut self.reconstruct,
            NetStage::Baseline => panic!("baseline is not a pipeline stage"),
        }
    }

    /// Largest per-stage size multiple; pipeline inputs must be divisible by it.
    pub fn size_multiple(&self) -> usize {
        NetStage::PIPELINE
            .iter()
            .map(|&s| self.stage(s).net.spec.size_multiple())
            .max()
            .unwrap_or(1)
    }

    /// Batched forward pass `x: [n,3,h,w]`, `cond: [n,K]`.
    pub fn forward(&self, x: &Tensor<T>, cond: &[T]) -> Result<(Tensor<T>, PipelineTape<T>)> {
        let m = self.size_multiple();
        if x.h % m != 0 || x.w % m != 0 {
            return Err(Error::Shape(format!("input {}x{} not divisible by {m}", x.w, x.h)));
        }
        let (bg, bg_tape) = self.background.net.forward(x, None)?;
        let (layer, te_tape) = self.text_extract.net.forward(&Tensor::concat_channels(x, &bg)?, None)?;
        let (stripped, rm_tape) = self.removal.net.forward(&layer, Some(cond))?;
        let (out, rc_tape) = self
            .reconstruct
            .net
            .forward(&Tensor::concat_channels(&bg, &stripped)?, None)?;
        Ok((
            out,
            PipelineTape {
                background: bg_tape,
                text_extract: te_tape,
                removal: rm_tape,
                reconstruct: rc_tape,
                predicted_background: bg,
                text_layer: layer,
                stripped_layer: stripped,
            },
        ))
    }

    /// Back-propagates `dy` through all four stages; gradients accumulate into each stage's params.
    pub fn backward(&mut self, tape: &PipelineTape<T>, dy: &Tensor<T>) {
        self.backward_with_aux(tape, dy, &AuxGrads::default());
    }

    /// Like [`Self::backward`], additionally injecting loss gradients at the intermediate outputs.
    /// The predicted background feeds two stages, so its gradient is the sum of both paths.
    pub fn backward_with_aux(&mut self, tape: &PipelineTape<T>, dy: &Tensor<T>, aux: &AuxGrads<T>) {
        let d_rc = self
            .reconstruct
            .net
            .backward(&tape.reconstruct, dy, true)
            .expect("dx requested");
        let (mut d_bg, mut d_stripped) = d_rc.split_channels(3);
        if let Some(g) = &aux.stripped_layer {
            d_stripped.add_assign(g);
        }
        let mut d_layer = self
            .removal
            .net
            .backward(&tape.removal, &d_stripped, true)
            .expect("dx requested");
        if let Some(g) = &aux.text_layer {
            d_layer.add_assign(g);
        }
        let d_te = self
            .text_extract
            .net
            .backward(&tape.text_extract, &d_layer, true)
            .expect("dx requested");
        let (_, d_bg2) = d_te.split_channels(3);
        d_bg.add_assign(&d_bg2);
        if let Some(g) = &aux.background {
            d_bg.add_assign(g);
        }
        self.background.net.backward(&tape.background, &d_bg, false);
    }

    pub fn zero_grad(&mut self) {
        for s in NetStage::PIPELINE {
            self.stage_mut(s).net.zero_grad();
        }
    }

    pub fn cast<U: Scalar>(&self) -> PipelineNet<U> {
        PipelineNet {
            background: self.background.cast(),
            text_extract: self.text_extract.cast(),
            removal: self.removal.cast(),
            reconstruct: self.reconstruct.cast(),
        }
    }
}

/// Runs the full pipeline on one image, returning the result and the three internal images.
pub fn sstr_forward(pipeline: &PipelineNet, img: &ImageRgb, cond: &ConditionVector) -> Result<(ImageRgb, Intermediates)> {
    pipeline.removal.check_condition(cond)?;
    let x = image_to_tensor::<f32, 3>(img);
    let (y, tape) = pipeline.forward(&x, &conditions_to_vec(&[cond]))?;
    Ok((
        tensor_to_image(&y, 0)?,
        Intermediates {
            background: tensor_to_image(&tape.predicted_background, 0)?,
            text_layer: tensor_to_image(&tape.text_layer, 0)?,
            stripped_layer: tensor_to_image(&tape.stripped_layer, 0)?,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::mse_loss;

    const SMALL: NetWidth = NetWidth {
        base_channels: 4,
        max_channels: 16,
    };

    #[test]
    fn forward_shapes() {
        let p = PipelineNet::<f32>::new(3, SMALL, 7).unwrap();
        let img = ImageRgb::filled(64, 48, 0.3).unwrap();
        let cond = ConditionVector::one_hot(2, 3).unwrap();
        let (out, inter) = sstr_forward(&p, &img, &cond).unwrap();
        assert_eq!((out.width(), out.height()), (64, 48));
        assert_eq!(inter.background.width(), 64);
        assert_eq!(inter.text_layer.height(), 48);
        assert_eq!(inter.stripped_layer.height(), 48);
        let odd = ImageRgb::filled(40, 40, 0.3).unwrap();
        assert!(matches!(sstr_forward(&p, &odd, &cond), Err(Error::Shape(_))));
    }

    #[test]
    fn every_stage_receives_gradient() {
        let mut p = PipelineNet::<f32>::new(2, SMALL, 3).unwrap();
        let x = image_to_tensor::<f32, 3>(&crate::synthgen::procedural_background(1, 32, 32).unwrap());
        let target = image_to_tensor::<f32, 3>(&crate::synthgen::procedural_background(2, 32, 32).unwrap());
        let (y, tape) = p.forward(&x, &[1.0, 0.0]).unwrap();
        let (_, dy) = mse_loss(&y, &target);
        p.zero_grad();
        p.backward(&tape, &dy);
        for s in NetStage::PIPELINE {
            let norm: f64 = p.stage(s).net.params().iter().flat_map(|q| &q.grad).map(|g| (*g as f64).powi(2)).sum();
            assert!(norm > 0.0, "{} has zero gradient", s.name());
        }
    }
}
