use super::metrics::target_residual;
use crate::error::{Error, Result};
use crate::imagecore::ImageRgb;
use crate::synthgen::SceneSample;

/// 21 log-spaced thresholds from 0.01% to 10%.
pub fn default_thresholds() -> Vec<f64> {
    let (lo, hi) = (1e-4f64.ln(), 1e-1f64.ln());
    (0..21).map(|i| (lo + (hi - lo) * i as f64 / 20.0).exp()).collect()
}

/// Target-region residual of every pair; every sample must contain its target.
pub fn target_residuals(pairs: &[(&SceneSample, &ImageRgb)]) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(Error::Input("no samples to evaluate".into()));
    }
    pairs.iter().map(|(s, o)| target_residual(s, o)).collect()
}

fn check_threshold(t: f64) -> Result<()> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::Input(format!("threshold must be positive, got {t}")));
    }
    Ok(())
}

/// Percentage of residuals strictly below `threshold`.
pub fn recall_from_residuals(residuals: &[f64], threshold: f64) -> Result<f64> {
    check_threshold(threshold)?;
    if residuals.is_empty() {
        return Err(Error::Input("no samples to evaluate".into()));
    }
    let hits = residuals.iter().filter(|&&r| r < threshold).count();
    Ok(100.0 * hits as f64 / residuals.len() as f64)
}

/// Share (in %) of samples whose target region in the output is within `threshold` MSE of the
/// true background, i.e. where the target word counts as removed.
pub fn mse_detection_recall(pairs: &[(&SceneSample, &ImageRgb)], threshold: f64) -> Result<f64> {
    check_threshold(threshold)?;
    recall_from_residuals(&target_residuals(pairs)?, threshold)
}

pub fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::Input("threshold list is empty".into()));
    }
    for t in thresholds {
        check_threshold(*t)?;
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Input("thresholds must be strictly increasing".into()));
    }
    Ok(())
}

/// `(threshold, recall)` points from precomputed residuals.
pub fn curve_from_residuals(residuals: &[f64], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_thresholds(thresholds)?;
    thresholds
        .iter()
        .map(|&t| Ok((t, recall_from_residuals(residuals, t)?)))
        .collect()
}

pub fn recall_curve(pairs: &[(&SceneSample, &ImageRgb)], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_thresholds(thresholds)?;
    curve_from_residuals(&target_residuals(pairs)?, thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_endpoints() {
        let g = default_thresholds();
        assert_eq!(g.len(), 21);
        assert!((g[0] - 1e-4).abs() < 1e-12 && (g[20] - 0.1).abs() < 1e-12);
        assert!((g[10] - 10f64.powf(-2.5)).abs() < 1e-12);
    }

    #[test]
    fn infinite_threshold_recalls_all() {
        assert_eq!(recall_from_residuals(&[0.5, 10.0, 0.0], f64::INFINITY).unwrap(), 100.0);
        assert!(recall_from_residuals(&[0.5], 0.0).is_err());
        assert!(recall_from_residuals(&[], 0.1).is_err());
        assert!(curve_from_residuals(&[0.1], &[0.2, 0.1]).is_err());
    }

    proptest! {
        #[test]
        fn curve_is_monotone_and_bounded(res in prop::collection::vec(0.0f64..0.5, 1..40)) {
            let curve = curve_from_residuals(&res, &default_thresholds()).unwrap();
            for w in curve.windows(2) {
                prop_assert!(w[0].1 <= w[1].1);
            }
            prop_assert!(curve.iter().all(|&(_, r)| (0.0..=100.0).contains(&r)));
        }
    }
}
