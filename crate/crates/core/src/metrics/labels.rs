//! Rule-based finding labeler and label F1.
//!
//! The labeler is a keyword matcher with sentence-scoped negation and hedge
//! cues over the 14-finding ontology. It stands in for a learned labeler.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finding {
    Atelectasis,
    Cardiomegaly,
    Consolidation,
    Edema,
    EnlargedCardiomediastinum,
    Fracture,
    LungLesion,
    LungOpacity,
    NoFinding,
    PleuralEffusion,
    PleuralOther,
    Pneumonia,
    Pneumothorax,
    SupportDevices,
}

impl Finding {
    pub const ALL: [Finding; 14] = [
        Finding::Atelectasis,
        Finding::Cardiomegaly,
        Finding::Consolidation,
        Finding::Edema,
        Finding::EnlargedCardiomediastinum,
        Finding::Fracture,
        Finding::LungLesion,
        Finding::LungOpacity,
        Finding::NoFinding,
        Finding::PleuralEffusion,
        Finding::PleuralOther,
        Finding::Pneumonia,
        Finding::Pneumothorax,
        Finding::SupportDevices,
    ];

    /// Human-readable name as it appears in reports and options.
    pub fn name(self) -> &'static str {
        match self {
            Finding::Atelectasis => "atelectasis",
            Finding::Cardiomegaly => "cardiomegaly",
            Finding::Consolidation => "consolidation",
            Finding::Edema => "edema",
            Finding::EnlargedCardiomediastinum => "enlarged cardiomediastinum",
            Finding::Fracture => "fracture",
            Finding::LungLesion => "lung lesion",
            Finding::LungOpacity => "lung opacity",
            Finding::NoFinding => "no finding",
            Finding::PleuralEffusion => "pleural effusion",
            Finding::PleuralOther => "pleural thickening",
            Finding::Pneumonia => "pneumonia",
            Finding::Pneumothorax => "pneumothorax",
            Finding::SupportDevices => "support device",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    fn keywords(self) -> &'static [&'static str] {
        match self {
            Finding::Atelectasis => &["atelectasis", "atelectatic"],
            Finding::Cardiomegaly => &["cardiomegaly", "enlarged heart", "heart is enlarged"],
            Finding::Consolidation => &["consolidation", "consolidations"],
            Finding::Edema => &["edema"],
            Finding::EnlargedCardiomediastinum => &[
                "enlarged cardiomediastinum",
                "widened mediastinum",
                "mediastinal widening",
            ],
            Finding::Fracture => &["fracture", "fractures"],
            Finding::LungLesion => &["lung lesion", "lesion", "nodule", "nodules", "mass"],
            Finding::LungOpacity => &["lung opacity", "opacity", "opacities"],
            Finding::NoFinding => &[
                "no acute cardiopulmonary process",
                "no acute cardiopulmonary abnormality",
                "no acute disease",
                "no acute abnormality",
                "lungs are clear",
                "normal chest",
            ],
            Finding::PleuralEffusion => &["pleural effusion", "effusion", "effusions"],
            Finding::PleuralOther => &["pleural thickening", "pleural plaque", "pleural plaques"],
            Finding::Pneumonia => &["pneumonia"],
            Finding::Pneumothorax => &["pneumothorax"],
            Finding::SupportDevices => &[
                "support device",
                "support devices",
                "tube",
                "catheter",
                "pacemaker",
            ],
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Finding {
    type Err = MetricsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_lowercase().replace(['_', '-'], " ");
        Finding::ALL
            .into_iter()
            .find(|f| f.name() == key || format!("{f:?}").to_lowercase() == key.replace(' ', ""))
            .or(match key.as_str() {
                "pleural other" => Some(Finding::PleuralOther),
                "support devices" => Some(Finding::SupportDevices),
                _ => None,
            })
            .ok_or_else(|| MetricsError::InvalidValue(format!("unknown finding {s:?}")))
    }
}

/// The five-finding subset used by the `*5` F1 variants.
pub const FIVE_LABELS: [Finding; 5] = [
    Finding::Atelectasis,
    Finding::Cardiomegaly,
    Finding::Consolidation,
    Finding::Edema,
    Finding::PleuralEffusion,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelValue {
    Present,
    #[default]
    Absent,
    Uncertain,
}

impl LabelValue {
    /// Uncertain counts as positive.
    pub fn is_positive(self) -> bool {
        !matches!(self, LabelValue::Absent)
    }

    fn rank(self) -> u8 {
        match self {
            LabelValue::Absent => 0,
            LabelValue::Uncertain => 1,
            LabelValue::Present => 2,
        }
    }
}

/// One value per finding; all 14 keys are always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LabelVector([LabelValue; 14]);

impl LabelVector {
    pub fn all_absent() -> Self {
        Self::default()
    }

    pub fn get(&self, finding: Finding) -> LabelValue {
        self.0[finding.index()]
    }

    pub fn set(&mut self, finding: Finding, value: LabelValue) {
        self.0[finding.index()] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Finding, LabelValue)> + '_ {
        Finding::ALL.into_iter().map(|f| (f, self.get(f)))
    }

    /// Findings with a positive value, excluding `no finding`.
    pub fn positives(&self) -> Vec<Finding> {
        self.iter()
            .filter(|(f, v)| *f != Finding::NoFinding && v.is_positive())
            .map(|(f, _)| f)
            .collect()
    }

    /// True if any pathology other than support devices is positive.
    pub fn any_pathology(&self) -> bool {
        self.iter().any(|(f, v)| {
            !matches!(f, Finding::NoFinding | Finding::SupportDevices) && v.is_positive()
        })
    }
}

impl Serialize for LabelVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(14))?;
        for (f, v) in self.iter() {
            map.serialize_entry(&f, &v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for LabelVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = std::collections::BTreeMap::<Finding, LabelValue>::deserialize(d)?;
        let mut v = LabelVector::all_absent();
        for (f, value) in map {
            v.set(f, value);
        }
        Ok(v)
    }
}

const NEGATION_CUES: &[&str] = &["no", "without", "free of", "negative for"];
const HEDGE_CUES: &[&str] = &[
    "possible",
    "possibly",
    "cannot exclude",
    "cannot be excluded",
    "may represent",
    "questionable",
    "suspicious for",
];
const SCOPE_BREAKS: &[&str] = &["but", "however", "although"];

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Start indices of every occurrence of `phrase` in `tokens`.
fn phrase_positions(tokens: &[String], phrase: &str) -> Vec<usize> {
    let needle: Vec<&str> = phrase.split(' ').collect();
    if needle.len() > tokens.len() {
        return Vec::new();
    }
    (0..=tokens.len() - needle.len())
        .filter(|&i| needle.iter().enumerate().all(|(k, w)| tokens[i + k] == *w))
        .collect()
}

fn sentences(text: &str) -> impl Iterator<Item = &str> {
    text.split(['.', '?', '!', ';', '\n'])
        .filter(|s| !s.trim().is_empty())
}

fn classify_mention(tokens: &[String], at: usize) -> LabelValue {
    let scope_start = SCOPE_BREAKS
        .iter()
        .flat_map(|b| phrase_positions(tokens, b))
        .filter(|&p| p < at)
        .map(|p| p + 1)
        .max()
        .unwrap_or(0);
    let negated = NEGATION_CUES.iter().any(|cue| {
        phrase_positions(tokens, cue)
            .into_iter()
            .any(|p| p >= scope_start && p < at)
    });
    if negated {
        return LabelValue::Absent;
    }
    let hedged = HEDGE_CUES
        .iter()
        .any(|cue| !phrase_positions(tokens, cue).is_empty());
    if hedged {
        LabelValue::Uncertain
    } else {
        LabelValue::Present
    }
}

/// Extracts a label vector from free report text.
///
/// A keyword mention is `present` unless an in-sentence negation cue precedes
/// it (`absent`) or the sentence carries a hedge (`uncertain`). Across
/// sentences the strongest mention wins. `no finding` needs an explicit
/// normal-study phrase and is cleared by any positive pathology.
pub fn label_extract(report: &str) -> LabelVector {
    let mut labels = LabelVector::all_absent();
    for sentence in sentences(report) {
        let tokens = words(sentence);
        for finding in Finding::ALL {
            for kw in finding.keywords() {
                for at in phrase_positions(&tokens, kw) {
                    let value = if finding == Finding::NoFinding {
                        LabelValue::Present
                    } else {
                        classify_mention(&tokens, at)
                    };
                    if value.rank() > labels.get(finding).rank() {
                        labels.set(finding, value);
                    }
                }
            }
        }
    }
    if labels.any_pathology() {
        labels.set(Finding::NoFinding, LabelValue::Absent);
    }
    labels
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Variant {
    Micro14,
    Macro14,
    Micro5,
    Macro5,
}

impl F1Variant {
    pub const ALL: [F1Variant; 4] = [
        F1Variant::Micro14,
        F1Variant::Macro14,
        F1Variant::Micro5,
        F1Variant::Macro5,
    ];
}

#[derive(Default, Clone, Copy)]
struct Confusion {
    tp: u64,
    fp: u64,
    fn_: u64,
}

impl Confusion {
    fn f1(self) -> Option<f64> {
        let denom = 2 * self.tp + self.fp + self.fn_;
        (denom > 0).then(|| 2.0 * self.tp as f64 / denom as f64)
    }
}

/// F1 over binary per-finding decisions (uncertain counts as positive).
///
/// Labels with no positives in either predictions or references have no
/// defined F1 and are left out of the macro average; if nothing is defined
/// the predictions agree perfectly and the score is 1.0.
pub fn label_f1(
    preds: &[LabelVector],
    refs: &[LabelVector],
    variant: F1Variant,
) -> Result<f64, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    if preds.len() != refs.len() {
        return Err(MetricsError::LengthMismatch(preds.len(), refs.len()));
    }
    let findings: &[Finding] = match variant {
        F1Variant::Micro14 | F1Variant::Macro14 => &Finding::ALL,
        F1Variant::Micro5 | F1Variant::Macro5 => &FIVE_LABELS,
    };
    let per_label: Vec<Confusion> = findings
        .iter()
        .map(|&f| {
            let mut c = Confusion::default();
            for (p, r) in preds.iter().zip(refs) {
                match (p.get(f).is_positive(), r.get(f).is_positive()) {
                    (true, true) => c.tp += 1,
                    (true, false) => c.fp += 1,
                    (false, true) => c.fn_ += 1,
                    (false, false) => {}
                }
            }
            c
        })
        .collect();
    let score = match variant {
        F1Variant::Micro14 | F1Variant::Micro5 => {
            let total = per_label.iter().fold(Confusion::default(), |a, c| Confusion {
                tp: a.tp + c.tp,
                fp: a.fp + c.fp,
                fn_: a.fn_ + c.fn_,
            });
            total.f1().unwrap_or(1.0)
        }
        F1Variant::Macro14 | F1Variant::Macro5 => {
            let defined: Vec<f64> = per_label.iter().filter_map(|c| c.f1()).collect();
            if defined.is_empty() {
                1.0
            } else {
                defined.iter().sum::<f64>() / defined.len() as f64
            }
        }
    };
    Ok(score)
}
