//! Automated quality control over canonical records.

use serde::{Deserialize, Serialize};

use super::types::{ImageRecord, Record, View};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QcRule {
    MinSize,
    EmptyReport,
    View,
}

impl QcRule {
    pub fn id(self) -> &'static str {
        match self {
            QcRule::MinSize => "min_size",
            QcRule::EmptyReport => "empty_report",
            QcRule::View => "view",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QcRules {
    /// Minimum (width, height); unreadable images fail this rule.
    pub min_size: Option<(u32, u32)>,
    /// Reject records with no report text at all (for report tasks).
    pub require_report: bool,
    /// Views allowed through.
    pub allowed_views: Vec<View>,
}

impl Default for QcRules {
    fn default() -> Self {
        Self {
            min_size: Some((32, 32)),
            require_report: false,
            allowed_views: View::KNOWN.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QcRejection {
    pub image_id: String,
    pub rule: QcRule,
}

pub trait ImageProbe {
    fn dimensions(&self, image: &ImageRecord) -> Option<(u32, u32)>;
}

/// Reads image headers from disk.
pub struct FsProbe;

impl ImageProbe for FsProbe {
    fn dimensions(&self, image: &ImageRecord) -> Option<(u32, u32)> {
        image::image_dimensions(&image.pixels_ref).ok()
    }
}

impl<F: Fn(&ImageRecord) -> Option<(u32, u32)>> ImageProbe for F {
    fn dimensions(&self, image: &ImageRecord) -> Option<(u32, u32)> {
        self(image)
    }
}

fn first_failure(record: &Record, rules: &QcRules, probe: &dyn ImageProbe) -> Option<QcRule> {
    if let Some((min_w, min_h)) = rules.min_size {
        match probe.dimensions(&record.image) {
            Some((w, h)) if w >= min_w && h >= min_h => {}
            _ => return Some(QcRule::MinSize),
        }
    }
    if rules.require_report && record.annotation.sections.is_empty() {
        return Some(QcRule::EmptyReport);
    }
    if !rules.allowed_views.contains(&record.image.view) {
        return Some(QcRule::View);
    }
    None
}

/// Partitions records into kept and rejected; one log entry per rejection
/// naming the first rule that failed.
pub fn qc_filter(
    records: Vec<Record>,
    rules: &QcRules,
    probe: &dyn ImageProbe,
) -> (Vec<Record>, Vec<QcRejection>) {
    let mut kept = Vec::new();
    let mut log = Vec::new();
    for record in records {
        match first_failure(&record, rules, probe) {
            None => kept.push(record),
            Some(rule) => log.push(QcRejection {
                image_id: record.image.image_id.clone(),
                rule,
            }),
        }
    }
    (kept, log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::types::{Annotation, Split};
    use std::collections::BTreeSet;

    fn record(id: &str, view: View, findings: &str) -> Record {
        let mut annotation = Annotation::default();
        annotation.sections.findings = findings.into();
        Record {
            image: ImageRecord {
                image_id: id.into(),
                patient_id: "p".into(),
                study_id: id.into(),
                view,
                pixels_ref: format!("{id}.png"),
                source_id: "s".into(),
                split: Split::Train,
            },
            annotation,
        }
    }

    fn probe(img: &ImageRecord) -> Option<(u32, u32)> {
        if img.image_id == "tiny" {
            Some((1, 1))
        } else {
            Some((64, 64))
        }
    }

    #[test]
    fn empty_input() {
        let (kept, log) = qc_filter(vec![], &QcRules::default(), &probe);
        assert!(kept.is_empty() && log.is_empty());
    }

    #[test]
    fn tiny_image_fails_min_size() {
        let (kept, log) = qc_filter(vec![record("tiny", View::PA, "x")], &QcRules::default(), &probe);
        assert!(kept.is_empty());
        assert_eq!(log[0].rule.id(), "min_size");
    }

    #[test]
    fn ten_records_two_distinct_failures() {
        let mut recs: Vec<Record> = (0..8).map(|i| record(&format!("r{i}"), View::AP, "ok")).collect();
        recs.push(record("tiny", View::AP, "ok"));
        recs.push(record("nv", View::Unknown, "ok"));
        let (kept, log) = qc_filter(recs, &QcRules::default(), &probe);
        assert_eq!(kept.len(), 8);
        assert_eq!(log.len(), 2);
        let rules: BTreeSet<_> = log.iter().map(|r| r.rule.id()).collect();
        assert_eq!(rules.len(), 2);
    }

    #[test]
    fn report_rule_and_fs_probe() {
        let rules = QcRules {
            min_size: None,
            require_report: true,
            allowed_views: View::KNOWN.to_vec(),
        };
        let (_, log) = qc_filter(vec![record("a", View::PA, "")], &rules, &probe);
        assert_eq!(log[0].rule, QcRule::EmptyReport);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.png");
        image::GrayImage::new(1, 1).save(&path).unwrap();
        let mut r = record("one", View::PA, "x");
        r.image.pixels_ref = path.to_string_lossy().into_owned();
        let missing = record("gone", View::PA, "x");
        let (kept, log) = qc_filter(vec![r, missing], &QcRules::default(), &FsProbe);
        assert!(kept.is_empty());
        assert!(log.iter().all(|r| r.rule == QcRule::MinSize));
    }
}
