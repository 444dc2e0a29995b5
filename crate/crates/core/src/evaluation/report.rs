use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{region_metrics, target_residual, RegionMetrics};
use super::recall::{check_thresholds, curve_from_residuals};
use crate::error::{Error, Result};
use crate::imagecore::{ImageRgb, RegionKind};
use crate::synthgen::SceneSample;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// JSON Schema of [`EvalReport`].
pub const REPORT_SCHEMA: &str = include_str!("../../schemas/eval_report.schema.json");

pub const RECALL_NOTE: &str = "recall = % of target-present samples whose target-region MSE between output and \
true background is below the threshold (ground-truth masks, no text detector)";

/// Mean quality over the samples that contain a region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionAggregate {
    pub region: RegionKind,
    pub mean_psnr: f64,
    pub mean_mse: f64,
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecallPoint {
    pub threshold: f64,
    pub recall: f64,
}

/// Aggregated evaluation of one model on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub note: String,
    pub model_id: String,
    pub dataset_id: String,
    pub sample_count: usize,
    pub regions: Vec<RegionAggregate>,
    /// Number of target-present samples behind the recall figures.
    pub recall_samples: usize,
    pub recall: Vec<RecallPoint>,
}

/// Order-independent mean: values are summed in sorted order.
fn stable_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unweighted per-region means over samples, plus the recall points.
pub fn aggregate_report(
    per_sample: &[Vec<RegionMetrics>],
    recalls: &[(f64, f64)],
    model_id: &str,
    dataset_id: &str,
) -> Result<EvalReport> {
    if per_sample.is_empty() {
        return Err(Error::Input("cannot aggregate an empty evaluation".into()));
    }
    let mut regions = Vec::new();
    for kind in RegionKind::ALL {
        let (mut mses, mut psnrs): (Vec<f64>, Vec<f64>) = per_sample
            .iter()
            .flat_map(|m| m.iter().filter(|r| r.region == kind))
            .map(|r| (r.mse, r.psnr))
            .unzip();
        if mses.is_empty() {
            continue;
        }
        regions.push(RegionAggregate {
            region: kind,
            mean_psnr: stable_mean(&mut psnrs),
            mean_mse: stable_mean(&mut mses),
            samples: mses.len(),
        });
    }
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        note: RECALL_NOTE.into(),
        model_id: model_id.into(),
        dataset_id: dataset_id.into(),
        sample_count: per_sample.len(),
        regions,
        recall_samples: 0,
        recall: recalls
            .iter()
            .map(|&(threshold, recall)| RecallPoint { threshold, recall })
            .collect(),
    })
}

/// Metrics of one evaluated sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEval {
    pub index: usize,
    pub target_word: Option<String>,
    pub metrics: Vec<RegionMetrics>,
    /// Target-region `mse(output, background)`; present when the target word is in the image.
    pub target_residual: Option<f64>,
}

impl SampleEval {
    pub fn region(&self, kind: RegionKind) -> Option<&RegionMetrics> {
        self.metrics.iter().find(|m| m.region == kind)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub per_sample: Vec<SampleEval>,
    pub report: EvalReport,
}

impl EvalReport {
    pub fn region(&self, kind: RegionKind) -> Option<&RegionAggregate> {
        self.regions.iter().find(|r| r.region == kind)
    }

    /// Recall at the grid point closest to `threshold`.
    pub fn recall_at(&self, threshold: f64) -> Option<f64> {
        self.recall
            .iter()
            .min_by(|a, b| (a.threshold.ln() - threshold.ln()).abs().total_cmp(&(b.threshold.ln() - threshold.ln()).abs()))
            .map(|p| p.recall)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Aligned plain-text rendering.
    pub fn render_table(&self) -> String {
        render_comparison(&[self])
    }
}

/// Side-by-side table of several reports on the same dataset.
pub fn render_comparison(reports: &[&EvalReport]) -> String {
    let mut s = String::new();
    let col = 14;
    let _ = writeln!(s, "# {}", RECALL_NOTE);
    if let Some(first) = reports.first() {
        let _ = writeln!(s, "# dataset: {}  samples: {}  target-present: {}", first.dataset_id, first.sample_count, first.recall_samples);
    }
    let _ = write!(s, "{:<24}", "metric");
    for r in reports {
        let _ = write!(s, "{:>col$}", truncate(&r.model_id, col - 1));
    }
    s.push('\n');
    let mut row = |label: String, f: &dyn Fn(&EvalReport) -> Option<f64>, fmt: &dyn Fn(f64) -> String| {
        let _ = write!(s, "{label:<24}");
        for r in reports {
            let _ = write!(s, "{:>col$}", f(r).map(fmt).unwrap_or_else(|| "-".into()));
        }
        s.push('\n');
    };
    for kind in RegionKind::ALL {
        row(
            format!("{} PSNR (dB)", kind.name()),
            &|r| r.region(kind).map(|a| a.mean_psnr),
            &|v| format!("{v:.2}"),
        );
        row(
            format!("{} MSE (%)", kind.name()),
            &|r| r.region(kind).map(|a| a.mean_mse * 100.0),
            &|v| format!("{v:.4}"),
        );
    }
    let thresholds: Vec<f64> = reports
        .first()
        .map(|r| r.recall.iter().map(|p| p.threshold).collect())
        .unwrap_or_default();
    for t in thresholds {
        row(
            format!("recall@{}%", trim_float(t * 100.0)),
            &|r| r.recall.iter().find(|p| p.threshold == t).map(|p| p.recall),
            &|v| format!("{v:.2}"),
        );
    }
    s
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

fn trim_float(v: f64) -> String {
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Region metrics and target residual of one output.
pub fn evaluate_sample(index: usize, sample: &SceneSample, output: &ImageRgb) -> Result<SampleEval> {
    Ok(SampleEval {
        index,
        target_word: sample.target_word.clone(),
        metrics: region_metrics(sample, output)?,
        target_residual: if sample.target_present() { Some(target_residual(sample, output)?) } else { None },
    })
}

/// Aggregates per-sample results; the recall curve covers the target-present samples.
pub fn summarize(per_sample: Vec<SampleEval>, thresholds: &[f64], model_id: &str, dataset_id: &str) -> Result<Evaluation> {
    let residuals: Vec<f64> = per_sample.iter().filter_map(|e| e.target_residual).collect();
    let curve = if residuals.is_empty() {
        check_thresholds(thresholds)?;
        Vec::new()
    } else {
        curve_from_residuals(&residuals, thresholds)?
    };
    let metrics: Vec<Vec<RegionMetrics>> = per_sample.iter().map(|e| e.metrics.clone()).collect();
    let mut report = aggregate_report(&metrics, &curve, model_id, dataset_id)?;
    report.recall_samples = residuals.len();
    Ok(Evaluation { per_sample, report })
}

/// Evaluates `outputs[i]` against `samples[i]` and aggregates the result.
pub fn evaluate(
    samples: &[&SceneSample],
    outputs: &[&ImageRgb],
    thresholds: &[f64],
    model_id: &str,
    dataset_id: &str,
) -> Result<Evaluation> {
    if samples.len() != outputs.len() {
        return Err(Error::Input(format!("{} samples but {} outputs", samples.len(), outputs.len())));
    }
    let per_sample = samples
        .iter()
        .zip(outputs)
        .enumerate()
        .map(|(i, (s, o))| evaluate_sample(i, s, o))
        .collect::<Result<Vec<_>>>()?;
    summarize(per_sample, thresholds, model_id, dataset_id)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn per_sample_csv(rows: &[SampleEval]) -> String {
    let mut s = String::from(
        "index,target_word,target_mse,target_psnr,nontarget_mse,nontarget_psnr,background_mse,background_psnr,target_residual\n",
    );
    for r in rows {
        let _ = write!(s, "{},{}", r.index, r.target_word.as_deref().unwrap_or(""));
        for kind in RegionKind::ALL {
            let m = r.region(kind);
            let _ = write!(s, ",{},{}", opt(m.map(|m| m.mse)), opt(m.map(|m| m.psnr)));
        }
        let _ = writeln!(s, ",{}", opt(r.target_residual));
    }
    s
}

pub fn recall_csv(report: &EvalReport) -> String {
    let mut s = String::from("threshold,recall\n");
    for p in &report.recall {
        let _ = writeln!(s, "{},{}", p.threshold, p.recall);
    }
    s
}

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const RECALL_CSV: &str = "recall_curve.csv";
pub const PER_SAMPLE_CSV: &str = "per_sample.csv";

/// Writes the report, its table, the recall curve and the per-sample rows into `dir`.
pub fn write_evaluation(dir: impl AsRef<Path>, eval: &Evaluation) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, text) in [
        (REPORT_JSON, eval.report.to_json()),
        (REPORT_TXT, eval.report.render_table()),
        (RECALL_CSV, recall_csv(&eval.report)),
        (PER_SAMPLE_CSV, per_sample_csv(&eval.per_sample)),
    ] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let r: EvalReport = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    if r.schema_version != REPORT_SCHEMA_VERSION {
        return Err(Error::Input(format!(
            "{} has report schema version {} (expected {REPORT_SCHEMA_VERSION})",
            path.display(),
            r.schema_version
        )));
    }
    Ok(r)
}
