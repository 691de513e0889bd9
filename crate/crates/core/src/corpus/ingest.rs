//! Mapping heterogeneous source records onto canonical records.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::restructure::restructure_report;
use super::types::{
    Annotation, ImageRecord, PriorStudy, Progression, QaPair, Record, Sections, Split, View,
};
use crate::bbox::BBox;
use crate::metrics::{Finding, LabelValue};

/// JSON pointers (RFC 6901) locating each field inside a raw record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMap {
    pub image_id: String,
    pub patient_id: String,
    pub study_id: String,
    pub split: String,
    pub pixels: String,
    #[serde(default)]
    pub view: Option<String>,
    /// Object of finding name -> raw label value.
    #[serde(default)]
    pub labels: Option<String>,
    /// Object of phrase -> list of `[x1, y1, x2, y2]`.
    #[serde(default)]
    pub boxes: Option<String>,
    /// Free-text report, restructured into sections.
    #[serde(default)]
    pub report: Option<String>,
    #[serde(default)]
    pub indication: Option<String>,
    #[serde(default)]
    pub findings: Option<String>,
    #[serde(default)]
    pub impression: Option<String>,
    #[serde(default)]
    pub prior_study: Option<String>,
    /// Object of finding name -> improved / stable / worsened.
    #[serde(default)]
    pub progression: Option<String>,
    /// Array of `{question, answer}` objects.
    #[serde(default)]
    pub qa: Option<String>,
}

impl FieldMap {
    fn pointers(&self) -> Vec<&str> {
        let mut out = vec![
            self.image_id.as_str(),
            &self.patient_id,
            &self.study_id,
            &self.split,
            &self.pixels,
        ];
        for p in [
            &self.view,
            &self.labels,
            &self.boxes,
            &self.report,
            &self.indication,
            &self.findings,
            &self.impression,
            &self.prior_study,
            &self.progression,
            &self.qa,
        ]
        .into_iter()
        .flatten()
        {
            out.push(p);
        }
        out
    }
}

/// Raw spellings accepted for each label value (compared case-insensitively).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelValueMap {
    pub present: Vec<String>,
    pub absent: Vec<String>,
    pub uncertain: Vec<String>,
}

impl Default for LabelValueMap {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            present: v(&["1", "1.0", "present", "positive", "true", "yes"]),
            absent: v(&["0", "0.0", "absent", "negative", "false", "no"]),
            uncertain: v(&["-1", "-1.0", "uncertain"]),
        }
    }
}

impl LabelValueMap {
    fn lookup(&self, raw: &str) -> Option<LabelValue> {
        let raw = raw.trim().to_lowercase();
        let hit = |xs: &[String]| xs.iter().any(|x| x.to_lowercase() == raw);
        if hit(&self.present) {
            Some(LabelValue::Present)
        } else if hit(&self.absent) {
            Some(LabelValue::Absent)
        } else if hit(&self.uncertain) {
            Some(LabelValue::Uncertain)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub source_id: String,
    /// Directory that `pixels` paths are relative to. When set, every image
    /// must be readable or the record is rejected.
    #[serde(default)]
    pub image_root: Option<PathBuf>,
    pub fields: FieldMap,
    #[serde(default)]
    pub label_values: LabelValueMap,
    /// Extra raw view spellings, e.g. `"LL" = "lateral"`.
    #[serde(default)]
    pub view_values: BTreeMap<String, View>,
    /// Extra raw split spellings, e.g. `"validate" = "val"`.
    #[serde(default)]
    pub split_values: BTreeMap<String, Split>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// Position in the raw stream.
    pub index: usize,
    pub image_id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOutput {
    pub records: Vec<Record>,
    pub rejections: Vec<Rejection>,
    /// Top-level raw fields no mapping refers to, with occurrence counts.
    pub dropped_fields: BTreeMap<String, usize>,
}

fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn parse_view(raw: &str, extra: &BTreeMap<String, View>) -> View {
    if let Some(v) = extra.get(raw) {
        return *v;
    }
    match raw.trim().to_uppercase().as_str() {
        "AP" => View::AP,
        "PA" => View::PA,
        "LATERAL" | "LL" | "LAT" | "RL" => View::Lateral,
        _ => View::Unknown,
    }
}

fn parse_split(raw: &str, extra: &BTreeMap<String, Split>) -> Option<Split> {
    if let Some(s) = extra.get(raw) {
        return Some(*s);
    }
    match raw.trim().to_lowercase().as_str() {
        "train" | "training" => Some(Split::Train),
        "val" | "valid" | "validation" | "dev" => Some(Split::Val),
        "test" | "testing" => Some(Split::Test),
        _ => None,
    }
}

fn parse_progression(raw: &str) -> Option<Progression> {
    match raw.trim().to_lowercase().as_str() {
        "improved" | "improving" => Some(Progression::Improved),
        "stable" | "unchanged" | "no change" => Some(Progression::Stable),
        "worsened" | "worsening" => Some(Progression::Worsened),
        _ => None,
    }
}

fn ingest_one(raw: &Value, desc: &SourceDescriptor) -> Result<Record, String> {
    let f = &desc.fields;
    let get = |ptr: &str| raw.pointer(ptr).filter(|v| !v.is_null());
    let required = |ptr: &str, name: &str| {
        get(ptr)
            .and_then(scalar_string)
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| format!("missing {name}"))
    };
    let image_id = required(&f.image_id, "image_id")?;
    let patient_id = required(&f.patient_id, "patient_id")?;
    let study_id = required(&f.study_id, "study_id")?;
    let split_raw = get(&f.split)
        .and_then(scalar_string)
        .ok_or_else(|| "no split".to_string())?;
    let split = parse_split(&split_raw, &desc.split_values)
        .ok_or_else(|| format!("bad split {split_raw:?}"))?;
    let pixels = required(&f.pixels, "pixels")?;
    let pixels_ref = match &desc.image_root {
        Some(root) => {
            let path = root.join(&pixels);
            image::image_dimensions(&path).map_err(|_| "unreadable image".to_string())?;
            path.to_string_lossy().into_owned()
        }
        None => pixels,
    };
    let view = f
        .view
        .as_deref()
        .and_then(get)
        .and_then(scalar_string)
        .map_or(View::Unknown, |v| parse_view(&v, &desc.view_values));

    let mut annotation = Annotation::default();
    if let Some(labels) = f.labels.as_deref().and_then(get) {
        let obj = labels.as_object().ok_or("labels is not an object")?;
        for (name, value) in obj {
            if value.is_null() {
                continue;
            }
            let finding: Finding = name.parse().map_err(|_| format!("unknown finding {name:?}"))?;
            let raw_value = scalar_string(value).ok_or("non-scalar label")?;
            let value = desc
                .label_values
                .lookup(&raw_value)
                .ok_or_else(|| format!("bad label value {raw_value:?}"))?;
            annotation.labels.insert(finding, value);
        }
    }
    if let Some(boxes) = f.boxes.as_deref().and_then(get) {
        let parsed: BTreeMap<String, Vec<BBox>> =
            serde_json::from_value(boxes.clone()).map_err(|e| format!("bad boxes: {e}"))?;
        annotation.boxes = parsed;
    }
    let mut sections = Sections::default();
    if let Some(text) = f.report.as_deref().and_then(get).and_then(Value::as_str) {
        if let Ok(r) = restructure_report(text) {
            sections = r.sections;
        }
    }
    for (ptr, slot) in [
        (&f.indication, &mut sections.indication),
        (&f.findings, &mut sections.findings),
        (&f.impression, &mut sections.impression),
    ] {
        if let Some(text) = ptr.as_deref().and_then(get).and_then(Value::as_str) {
            *slot = text.trim().to_string();
        }
    }
    annotation.sections = sections;
    if let Some(prior) = f.prior_study.as_deref().and_then(get).and_then(scalar_string) {
        let mut progression = BTreeMap::new();
        if let Some(obj) = f.progression.as_deref().and_then(get).and_then(Value::as_object) {
            for (name, value) in obj {
                let finding: Finding =
                    name.parse().map_err(|_| format!("unknown finding {name:?}"))?;
                let p = value
                    .as_str()
                    .and_then(parse_progression)
                    .ok_or_else(|| format!("bad progression {value}"))?;
                progression.insert(finding, p);
            }
        }
        annotation.prior = Some(PriorStudy {
            study_id: prior,
            progression,
        });
    }
    if let Some(qa) = f.qa.as_deref().and_then(get) {
        annotation.qa =
            serde_json::from_value::<Vec<QaPair>>(qa.clone()).map_err(|e| format!("bad qa: {e}"))?;
    }
    annotation.validate()?;
    Ok(Record {
        image: ImageRecord {
            image_id,
            patient_id,
            study_id,
            view,
            pixels_ref,
            source_id: desc.source_id.clone(),
            split,
        },
        annotation,
    })
}

/// Converts raw source records into canonical records.
///
/// Records that fail validation are rejected with a reason; duplicate image
/// ids after the first are rejected too.
pub fn ingest_source(desc: &SourceDescriptor, raw: &[Value]) -> IngestOutput {
    let mapped_roots: BTreeSet<String> = desc
        .fields
        .pointers()
        .into_iter()
        .filter_map(|p| p.trim_start_matches('/').split('/').next())
        .map(|s| s.replace("~1", "/").replace("~0", "~"))
        .collect();
    let mut out = IngestOutput::default();
    let mut seen = BTreeSet::new();
    for (index, value) in raw.iter().enumerate() {
        if let Some(obj) = value.as_object() {
            for key in obj.keys().filter(|k| !mapped_roots.contains(*k)) {
                *out.dropped_fields.entry(key.clone()).or_default() += 1;
            }
        }
        let id_hint = value
            .pointer(&desc.fields.image_id)
            .and_then(scalar_string);
        match ingest_one(value, desc) {
            Ok(record) if !seen.insert(record.image.image_id.clone()) => {
                out.rejections.push(Rejection {
                    index,
                    image_id: id_hint,
                    reason: "duplicate image_id".into(),
                })
            }
            Ok(record) => out.records.push(record),
            Err(reason) => out.rejections.push(Rejection {
                index,
                image_id: id_hint,
                reason,
            }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn descriptor() -> SourceDescriptor {
        SourceDescriptor {
            source_id: "fixture".into(),
            image_root: None,
            fields: FieldMap {
                image_id: "/id".into(),
                patient_id: "/patient".into(),
                study_id: "/study".into(),
                split: "/split".into(),
                pixels: "/path".into(),
                view: Some("/view".into()),
                labels: Some("/labels".into()),
                boxes: Some("/boxes".into()),
                report: Some("/report".into()),
                indication: None,
                findings: None,
                impression: None,
                prior_study: Some("/prior/study".into()),
                progression: Some("/prior/change".into()),
                qa: None,
            },
            label_values: LabelValueMap::default(),
            view_values: BTreeMap::new(),
            split_values: BTreeMap::new(),
        }
    }

    #[test]
    fn labels_only_record() {
        let raw = json!({"id": "i1", "patient": "p1", "study": "s1", "split": "train",
            "path": "i1.png", "view": "PA", "labels": {"Edema": 1.0, "Pneumonia": -1, "Fracture": null}});
        let out = ingest_source(&descriptor(), &[raw]);
        assert_eq!(out.records.len(), 1);
        let rec = &out.records[0];
        assert!(rec.annotation.sections.is_empty());
        assert_eq!(rec.annotation.labels.get(&Finding::Edema), Some(&LabelValue::Present));
        assert_eq!(rec.annotation.labels.get(&Finding::Pneumonia), Some(&LabelValue::Uncertain));
        assert_eq!(rec.annotation.labels.len(), 2);
        assert_eq!(rec.image.view, View::PA);
    }

    #[test]
    fn missing_split_is_rejected() {
        let raw = json!({"id": "i1", "patient": "p1", "study": "s1", "path": "x.png"});
        let out = ingest_source(&descriptor(), &[raw]);
        assert!(out.records.is_empty());
        assert_eq!(out.rejections[0].reason, "no split");
    }

    #[test]
    fn one_malformed_out_of_three() {
        let ok = |id: &str| json!({"id": id, "patient": "p", "study": id, "split": "test",
            "path": "x.png", "report": "FINDINGS: clear. IMPRESSION: normal.", "site": "a"});
        let bad = json!({"patient": "p", "study": "s", "split": "test", "path": "x.png"});
        let out = ingest_source(&descriptor(), &[ok("a"), bad, ok("b")]);
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.rejections.len(), 1);
        assert_eq!(out.rejections[0].reason, "missing image_id");
        assert_eq!(out.dropped_fields.get("site"), Some(&2));
        assert_eq!(out.records[0].annotation.sections.findings, "clear.");
    }

    #[test]
    fn unreadable_image_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let mut desc = descriptor();
        desc.image_root = Some(dir.path().to_path_buf());
        image::GrayImage::new(4, 4).save(dir.path().join("ok.png")).unwrap();
        let rec = |id: &str, path: &str| json!({"id": id, "patient": "p", "study": "s",
            "split": "val", "path": path});
        let out = ingest_source(&desc, &[rec("a", "ok.png"), rec("b", "missing.png"), rec("a", "ok.png")]);
        assert_eq!(out.records.len(), 1);
        let reasons: Vec<_> = out.rejections.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(reasons, vec!["unreadable image", "duplicate image_id"]);
    }

    #[test]
    fn prior_and_boxes() {
        let raw = json!({"id": "i", "patient": "p", "study": "s2", "split": "train", "path": "x",
            "boxes": {"left pleural effusion": [[10, 60, 40, 90]]},
            "prior": {"study": "s1", "change": {"pleural_effusion": "worsened"}}});
        let out = ingest_source(&descriptor(), &[raw]);
        let a = &out.records[0].annotation;
        assert_eq!(a.boxes["left pleural effusion"][0], BBox::new(10, 60, 40, 90).unwrap());
        let prior = a.prior.as_ref().unwrap();
        assert_eq!(prior.study_id, "s1");
        assert_eq!(prior.progression[&Finding::PleuralEffusion], Progression::Worsened);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let base = |extra: Value| {
            let mut v = json!({"id": "i", "patient": "p", "study": "s", "split": "train", "path": "x"});
            v.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
            v
        };
        let out = ingest_source(
            &descriptor(),
            &[
                base(json!({"labels": {"edema": "maybe"}})),
                base(json!({"boxes": {"x": [[5, 5, 1, 1]]}})),
                base(json!({"boxes": {" ": [[1, 1, 5, 5]]}})),
                base(json!({"split": "holdout"})),
            ],
        );
        assert!(out.records.is_empty());
        assert_eq!(out.rejections.len(), 4);
    }
}
