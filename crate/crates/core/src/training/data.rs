use crate::error::{Error, Result};
use crate::imagecore::Image;
use crate::nets::Tensor;
use crate::synthgen::{Dataset, DatasetKind, SceneSample, TextOnlySample};

use super::config::TrainStage;

/// One (input, condition, target) training pair, channel-major f32.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainPair {
    pub input: Vec<f32>,
    pub cond: Vec<f32>,
    pub target: Vec<f32>,
    /// Intermediate targets (background, text layer, stripped layer) for auxiliary losses.
    pub aux: Option<[Vec<f32>; 3]>,
}

/// A stage's pairs held in memory, all with the same geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSet {
    pub stage: TrainStage,
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub pairs: Vec<TrainPair>,
}

/// A stacked mini-batch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub input: Tensor<f32>,
    pub cond: Vec<f32>,
    pub target: Tensor<f32>,
    pub aux: Option<[Tensor<f32>; 3]>,
}

fn planes<const C: usize>(imgs: &[&Image<C>]) -> Vec<f32> {
    imgs.iter().flat_map(|i| i.data().iter().copied()).collect()
}

fn is_conditioned(stage: TrainStage) -> bool {
    matches!(stage, TrainStage::Removal | TrainStage::Finetune | TrainStage::Baseline)
}

/// Builds the pair of `stage` from a scene sample.
pub fn scene_pair(stage: TrainStage, s: &SceneSample, aux: bool) -> TrainPair {
    let (input, target) = match stage {
        TrainStage::Background => (planes(&[&s.overlaid]), planes(&[&s.background])),
        TrainStage::TextExtract => (
            [planes(&[&s.overlaid]), planes(&[&s.background])].concat(),
            planes(&[&s.text_layer]),
        ),
        TrainStage::Removal => (planes(&[&s.text_layer]), planes(&[&s.text_layer_stripped])),
        TrainStage::Reconstruct => (
            [planes(&[&s.background]), planes(&[&s.text_layer_stripped])].concat(),
            planes(&[&s.ideal]),
        ),
        TrainStage::Finetune | TrainStage::Baseline => (planes(&[&s.overlaid]), planes(&[&s.ideal])),
    };
    let aux = (aux && stage == TrainStage::Finetune).then(|| {
        [
            planes(&[&s.background]),
            planes(&[&s.text_layer]),
            planes(&[&s.text_layer_stripped]),
        ]
    });
    TrainPair {
        input,
        cond: if is_conditioned(stage) { s.condition.as_slice().to_vec() } else { Vec::new() },
        target,
        aux,
    }
}

/// Removal-stage pair from a text-only sample.
pub fn text_only_pair(s: &TextOnlySample) -> TrainPair {
    TrainPair {
        input: planes(&[&s.text_layer]),
        cond: s.condition.as_slice().to_vec(),
        target: planes(&[&s.text_layer_stripped]),
        aux: None,
    }
}

pub fn stage_channels(stage: TrainStage) -> (usize, usize) {
    match stage {
        TrainStage::Background => (3, 3),
        TrainStage::TextExtract => (6, 4),
        TrainStage::Removal => (4, 4),
        TrainStage::Reconstruct => (7, 3),
        TrainStage::Finetune | TrainStage::Baseline => (3, 3),
    }
}

impl PairSet {
    pub fn new(stage: TrainStage, side: usize, pairs: Vec<TrainPair>) -> Result<Self> {
        let (in_channels, out_channels) = stage_channels(stage);
        let hw = side * side;
        for (i, p) in pairs.iter().enumerate() {
            if p.input.len() != in_channels * hw || p.target.len() != out_channels * hw {
                return Err(Error::Dataset(format!("pair {i} does not match {side}x{side} {stage:?} geometry")));
            }
        }
        if let Some(k) = pairs.first().map(|p| p.cond.len()) {
            if pairs.iter().any(|p| p.cond.len() != k) {
                return Err(Error::Dataset("pairs disagree on condition length".into()));
            }
        }
        Ok(Self {
            stage,
            in_channels,
            out_channels,
            height: side,
            width: side,
            pairs,
        })
    }

    /// Loads `indices` of a dataset as pairs for `stage`.
    pub fn load(stage: TrainStage, ds: &Dataset, indices: &[usize], aux: bool) -> Result<Self> {
        let kind = ds.meta().kind;
        if stage != TrainStage::Removal && kind != DatasetKind::Scene {
            return Err(Error::Dataset(format!(
                "{} training needs a scene dataset, {} is text-only",
                stage.name(),
                ds.root().display()
            )));
        }
        let pairs = indices
            .iter()
            .map(|&i| {
                if i >= ds.len() {
                    return Err(Error::Dataset(format!("sample index {i} out of range")));
                }
                if stage == TrainStage::Removal {
                    Ok(text_only_pair(&ds.load_text_only(i)?))
                } else {
                    Ok(scene_pair(stage, &ds.load_scene(i)?, aux))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(stage, ds.meta().side, pairs)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let n = indices.len();
        let (h, w) = (self.height, self.width);
        let gather = |f: &dyn Fn(&TrainPair) -> &[f32]| indices.iter().flat_map(|&i| f(&self.pairs[i]).iter().copied()).collect::<Vec<f32>>();
        let input = Tensor::from_vec(n, self.in_channels, h, w, gather(&|p| &p.input)).expect("validated geometry");
        let target = Tensor::from_vec(n, self.out_channels, h, w, gather(&|p| &p.target)).expect("validated geometry");
        let cond = gather(&|p| &p.cond);
        let aux = self.pairs[indices[0]].aux.as_ref().map(|_| {
            let chans = [3, 4, 4];
            std::array::from_fn(|j| {
                let data = gather(&|p| &p.aux.as_ref().expect("aux on every pair")[j]);
                Tensor::from_vec(n, chans[j], h, w, data).expect("validated geometry")
            })
        });
        Batch { input, cond, target, aux }
    }
}
