//! Backend for a timed, blinded reader study: readers either write reports
//! from scratch or edit drafted ones, then rate the draft.
//!
//! All state changes go through an append-only event log, and the analysis
//! is a pure function of that log.

pub mod analyze;
pub mod assign;
pub mod config;
pub mod events;
pub mod server;
pub mod study;

pub use analyze::{analyze, ArmStats, Comparison, StudyReport};
pub use assign::{assign_cases, Assignment};
pub use config::{Arm, CaseRecord, Plan, Role, StudyConfig};
pub use events::{read_events, Efficiency, EventKind, Feedback, Reason, StudyEvent};
pub use server::{router, serve, spawn};
pub use study::{CasePayload, ReportAck, Study};

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("invalid study config: {0}")]
    Config(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("case {0} is not assigned to this session")]
    UnknownCase(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid submission: {0}")]
    Invalid(String),
    #[error("malformed event log line {line}: {reason}")]
    Log { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, StudyError>;
