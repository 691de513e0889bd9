//! Box overlap metrics and box parsing from model responses.

use std::sync::OnceLock;

use regex::Regex;

use super::MetricsError;
use crate::bbox::{BBox, COORD_MAX};

pub const DEFAULT_IOU_THRESHOLDS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

/// Intersection over union with half-open integer areas.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Mean over thresholds of the fraction of IOUs at or above each threshold.
pub fn map_at_thresholds(ious: &[f64], thresholds: &[f64]) -> Result<f64, MetricsError> {
    if ious.is_empty() || thresholds.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(bad) = ious.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(MetricsError::InvalidValue(format!("iou {bad} outside [0,1]")));
    }
    let n = ious.len() as f64;
    let rates = thresholds
        .iter()
        .map(|&t| ious.iter().filter(|&&v| v >= t).count() as f64 / n);
    Ok(rates.sum::<f64>() / thresholds.len() as f64)
}

pub fn mean_iou(ious: &[f64]) -> Result<f64, MetricsError> {
    if ious.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

fn box_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let num = r"\s*([-\x{2212}]?\d+)\s*";
        Regex::new(&format!(r"\[{num},{num},{num},{num}\]")).unwrap()
    })
}

/// Parses the first `[x1,y1,x2,y2]` in a response, clamping to `[0, 100]`.
pub fn parse_box(response: &str) -> Option<BBox> {
    let caps = box_pattern().captures(response)?;
    let mut v = [0i32; 4];
    for (slot, m) in v.iter_mut().zip(caps.iter().skip(1)) {
        let text = m?.as_str().replace('\u{2212}', "-");
        let parsed: i64 = text.parse().unwrap_or(if text.starts_with('-') { i64::MIN } else { i64::MAX });
        *slot = parsed.clamp(0, COORD_MAX as i64) as i32;
    }
    BBox::new(v[0], v[1], v[2], v[3]).ok()
}
