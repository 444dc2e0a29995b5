//! Region-restricted quality metrics, MSE-threshold removal recall and report aggregation.

mod metrics;
mod recall;
mod report;

pub use metrics::{nontarget_change, region_metrics, sample_masks, target_residual, RegionMetrics};
pub use recall::{
    check_thresholds, curve_from_residuals, default_thresholds, mse_detection_recall, recall_curve,
    recall_from_residuals, target_residuals,
};
pub use report::{
    aggregate_report, evaluate, evaluate_sample, per_sample_csv, read_report, recall_csv, render_comparison, summarize, write_evaluation,
    EvalReport, Evaluation, RecallPoint, RegionAggregate, SampleEval, PER_SAMPLE_CSV, RECALL_CSV, RECALL_NOTE,
    REPORT_JSON, REPORT_SCHEMA, REPORT_SCHEMA_VERSION, REPORT_TXT,
};
