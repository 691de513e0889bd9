//! Scoring functions and statistical procedures.

mod bootstrap;
mod grounding;
mod labels;
mod options;
mod reliability;
mod rouge;
pub mod special;
mod stats;

pub use bootstrap::{accuracy_ci, mean_ci, CIResult, DEFAULT_RESAMPLES};
pub use grounding::{iou, map_at_thresholds, mean_iou, parse_box, DEFAULT_IOU_THRESHOLDS};
pub use labels::{
    label_extract, label_f1, F1Variant, Finding, LabelValue, LabelVector, FIVE_LABELS,
};
pub use options::{match_option, normalize_text};
pub use reliability::{agreement_ratio, icc, LIKERT_VALUES};
pub use rouge::{lcs_len, rouge_l};
pub use stats::{mann_whitney, mann_whitney_normal, mean_sd, paired_t, MannWhitney};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("invalid value: {0}")]
    InvalidValue(String),
}
