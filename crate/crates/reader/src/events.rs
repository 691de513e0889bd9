//! The append-only study event log.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{Arm, Role};
use crate::{Result, StudyError};

/// Why a reader changed the draft, grouped into content and style.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Reason {
    #[serde(rename = "content:missing-finding")]
    MissingFinding,
    #[serde(rename = "content:false-prediction")]
    FalsePrediction,
    #[serde(rename = "content:severity-misassessment")]
    SeverityMisassessment,
    #[serde(rename = "content:wrong-location")]
    WrongLocation,
    #[serde(rename = "style:ordering")]
    Ordering,
    #[serde(rename = "style:phrasing")]
    Phrasing,
    #[serde(rename = "style:verbosity")]
    Verbosity,
    #[serde(rename = "style:formatting")]
    Formatting,
}

impl Reason {
    pub const ALL: [Reason; 8] = [
        Reason::MissingFinding,
        Reason::FalsePrediction,
        Reason::SeverityMisassessment,
        Reason::WrongLocation,
        Reason::Ordering,
        Reason::Phrasing,
        Reason::Verbosity,
        Reason::Formatting,
    ];

    pub fn is_content(self) -> bool {
        matches!(
            self,
            Reason::MissingFinding | Reason::FalsePrediction | Reason::SeverityMisassessment | Reason::WrongLocation
        )
    }

    pub fn key(self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .expect("reason serializes to a string")
    }
}

/// Whether the draft saved time on writing and on interpretation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Efficiency {
    pub writing: bool,
    pub interpretation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    /// One of -10, -5, 0, 5, 10.
    pub likert: i32,
    #[serde(default)]
    pub reasons: Vec<Reason>,
    pub efficiency: Efficiency,
    #[serde(default)]
    pub comment: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Assigned,
    ReportSubmitted {
        text: String,
        /// Receipt time minus serve time, measured by the server.
        server_elapsed_s: f64,
        /// The client's own measurement, kept for audit only.
        client_elapsed_s: Option<f64>,
        #[serde(default)]
        idempotency_key: Option<String>,
    },
    FeedbackSubmitted(Feedback),
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Assigned => "assigned",
            EventKind::ReportSubmitted { .. } => "report_submitted",
            EventKind::FeedbackSubmitted(_) => "feedback_submitted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyEvent {
    pub seq: u64,
    /// ISO-8601 UTC with millisecond precision.
    pub timestamp: String,
    pub session_id: String,
    pub reader_id: String,
    pub role: Role,
    pub case_id: String,
    pub arm: Arm,
    #[serde(flatten)]
    pub event: EventKind,
}

pub fn read_events(path: &Path) -> Result<Vec<StudyEvent>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: StudyEvent = serde_json::from_str(&line).map_err(|e| StudyError::Log {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(ev);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reasons_serialize_with_group_prefix() {
        assert_eq!(Reason::FalsePrediction.key(), "content:false-prediction");
        assert_eq!(Reason::Verbosity.key(), "style:verbosity");
        assert_eq!(Reason::ALL.iter().filter(|r| r.is_content()).count(), 4);
        let back: Reason = serde_json::from_str("\"style:ordering\"").unwrap();
        assert_eq!(back, Reason::Ordering);
    }

    #[test]
    fn event_line_shape() {
        let ev = StudyEvent {
            seq: 3,
            timestamp: "2024-01-01T00:00:00.000Z".into(),
            session_id: "s".into(),
            reader_id: "r".into(),
            role: Role::Resident,
            case_id: "c".into(),
            arm: Arm::Scratch,
            event: EventKind::ReportSubmitted {
                text: "t".into(),
                server_elapsed_s: 1.5,
                client_elapsed_s: Some(1.4),
                idempotency_key: None,
            },
        };
        let v = serde_json::to_value(&ev).unwrap();
        assert_eq!(v["kind"], "report_submitted");
        assert_eq!(v["arm"], "scratch");
        let back: StudyEvent = serde_json::from_value(v).unwrap();
        assert_eq!(back, ev);
    }
}
