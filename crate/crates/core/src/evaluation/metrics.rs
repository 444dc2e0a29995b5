use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{mse, psnr_from_mse, region_masks, ImageRgb, RegionKind, RegionMasks};
use crate::synthgen::SceneSample;

/// Quality of one output restricted to one region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionMetrics {
    pub region: RegionKind,
    pub psnr: f64,
    /// Mean squared error on the [0, 1] scale.
    pub mse: f64,
    pub pixels: usize,
}

/// Target, non-target and background masks of a sample.
pub fn sample_masks(sample: &SceneSample) -> Result<RegionMasks> {
    region_masks(
        sample.placements.iter().map(|p| (p.bbox, p.is_target)),
        &sample.pad,
        sample.side(),
    )
}

fn check_dims(sample: &SceneSample, output: &ImageRgb) -> Result<()> {
    if !output.same_dims(&sample.ideal) {
        return Err(Error::Shape(format!(
            "output {}x{} vs ideal {}x{}",
            output.width(),
            output.height(),
            sample.ideal.width(),
            sample.ideal.height()
        )));
    }
    Ok(())
}

/// MSE/PSNR between `output` and the ideal image on every non-empty region; padding is excluded.
pub fn region_metrics(sample: &SceneSample, output: &ImageRgb) -> Result<Vec<RegionMetrics>> {
    check_dims(sample, output)?;
    let masks = sample_masks(sample)?;
    let mut out = Vec::new();
    for kind in RegionKind::ALL {
        let m = masks.get(kind);
        if m.is_empty() {
            continue;
        }
        let e = mse(output, &sample.ideal, Some(m))?;
        if kind == RegionKind::Nontarget {
            // ideal and overlaid agree on non-target pixels by construction
            let vs_input = mse(output, &sample.overlaid, Some(m))?;
            if (vs_input - e).abs() > 1e-12 {
                return Err(Error::Annotation(format!(
                    "sample {}: ideal and overlaid images differ on non-target pixels",
                    sample.background_id
                )));
            }
        }
        out.push(RegionMetrics {
            region: kind,
            psnr: psnr_from_mse(e),
            mse: e,
            pixels: m.count(),
        });
    }
    Ok(out)
}

/// `mse(output, background)` over the target mask: how much of the target word survives.
pub fn target_residual(sample: &SceneSample, output: &ImageRgb) -> Result<f64> {
    check_dims(sample, output)?;
    let masks = sample_masks(sample)?;
    if masks.target.is_empty() {
        return Err(Error::Input(format!(
            "sample on background {} has no target word",
            sample.background_id
        )));
    }
    mse(output, &sample.background, Some(&masks.target))
}

/// `mse(output, overlaid)` over the non-target mask, `None` when there are no non-target words.
pub fn nontarget_change(sample: &SceneSample, output: &ImageRgb) -> Result<Option<f64>> {
    check_dims(sample, output)?;
    let masks = sample_masks(sample)?;
    if masks.nontarget.is_empty() {
        return Ok(None);
    }
    mse(output, &sample.overlaid, Some(&masks.nontarget)).map(Some)
}
