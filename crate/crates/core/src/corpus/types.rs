use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::metrics::{Finding, LabelValue, LabelVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum View {
    AP,
    PA,
    #[serde(rename = "lateral")]
    Lateral,
    #[serde(rename = "unknown")]
    Unknown,
}

impl View {
    pub const KNOWN: [View; 3] = [View::AP, View::PA, View::Lateral];

    pub fn name(self) -> &'static str {
        match self {
            View::AP => "AP",
            View::PA => "PA",
            View::Lateral => "lateral",
            View::Unknown => "unknown",
        }
    }

    pub fn is_frontal(self) -> bool {
        matches!(self, View::AP | View::PA)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Progression {
    Improved,
    Stable,
    Worsened,
}

impl Progression {
    pub const ALL: [Progression; 3] = [Progression::Improved, Progression::Stable, Progression::Worsened];

    pub fn name(self) -> &'static str {
        match self {
            Progression::Improved => "improved",
            Progression::Stable => "stable",
            Progression::Worsened => "worsened",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Indication,
    Findings,
    Impression,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub patient_id: String,
    pub study_id: String,
    pub view: View,
    pub pixels_ref: String,
    pub source_id: String,
    pub split: Split,
}

/// Report sections; absent sections are empty strings, never null.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sections {
    #[serde(default)]
    pub indication: String,
    #[serde(default)]
    pub findings: String,
    #[serde(default)]
    pub impression: String,
}

impl Sections {
    pub fn get(&self, section: Section) -> &str {
        match section {
            Section::Indication => &self.indication,
            Section::Findings => &self.findings,
            Section::Impression => &self.impression,
        }
    }

    pub fn get_mut(&mut self, section: Section) -> &mut String {
        match section {
            Section::Indication => &mut self.indication,
            Section::Findings => &mut self.findings,
            Section::Impression => &mut self.impression,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.indication.is_empty() && self.findings.is_empty() && self.impression.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorStudy {
    pub study_id: String,
    pub progression: BTreeMap<Finding, Progression>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    #[serde(default)]
    pub labels: BTreeMap<Finding, LabelValue>,
    #[serde(default)]
    pub boxes: BTreeMap<String, Vec<BBox>>,
    #[serde(default)]
    pub sections: Sections,
    #[serde(default)]
    pub prior: Option<PriorStudy>,
    #[serde(default)]
    pub qa: Vec<QaPair>,
}

impl Annotation {
    /// Annotated labels as a full vector; unannotated findings read as absent.
    pub fn label_vector(&self) -> LabelVector {
        let mut v = LabelVector::all_absent();
        for (&f, &value) in &self.labels {
            v.set(f, value);
        }
        v
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.boxes.keys().any(|p| p.trim().is_empty()) {
            return Err("empty box phrase".into());
        }
        Ok(())
    }
}

/// One source image with its annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub image: ImageRecord,
    pub annotation: Annotation,
}

/// One instruction-tuning sample. Field order matches the manifest format.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Triplet {
    pub instruction: String,
    pub images: Vec<String>,
    pub response: String,
    pub task_id: String,
    pub source_id: String,
    pub split: Split,
}
