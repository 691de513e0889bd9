//! Session state machine over the event log.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use cxr_core::metrics::LIKERT_VALUES;
use serde::{Deserialize, Serialize};

use crate::assign::{assign_cases, Assignment};
use crate::config::{Arm, Role, StudyConfig};
use crate::events::{read_events, EventKind, Feedback, StudyEvent};
use crate::{Result, StudyError};

/// What a client sees for one case. Carries no arm or draft-source field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CasePayload {
    pub case_id: String,
    pub image_urls: Vec<String>,
    pub indication: String,
    pub prefill: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportAck {
    pub case_id: String,
    pub server_elapsed_s: f64,
}

#[derive(Debug, Clone)]
enum Phase {
    Served { at: DateTime<Utc> },
    Reported { key: Option<String>, ack: ReportAck },
    Done,
}

struct Session {
    reader_id: String,
    role: Role,
    assignments: Vec<Assignment>,
    phases: HashMap<String, Phase>,
}

impl Session {
    fn current(&self) -> Option<&Assignment> {
        self.assignments
            .iter()
            .find(|a| !matches!(self.phases.get(&a.case_id), Some(Phase::Done)))
    }

    fn assignment(&self, case_id: &str) -> Result<&Assignment> {
        self.assignments
            .iter()
            .find(|a| a.case_id == case_id)
            .ok_or_else(|| StudyError::UnknownCase(case_id.to_string()))
    }
}

type Clock = Box<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub struct Study {
    cfg: StudyConfig,
    log: Option<File>,
    events: Vec<StudyEvent>,
    sessions: HashMap<String, Session>,
    clock: Clock,
}

fn parse_ts(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| StudyError::Invalid(format!("timestamp {s:?}: {e}")))
}

impl Study {
    /// A study that keeps its log in memory only.
    pub fn in_memory(cfg: StudyConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            log: None,
            events: Vec::new(),
            sessions: HashMap::new(),
            clock: Box::new(Utc::now),
        })
    }

    /// Opens (or creates) the log at `path`, replaying existing events.
    pub fn open(cfg: StudyConfig, path: &Path) -> Result<Self> {
        let mut study = Self::in_memory(cfg)?;
        if path.exists() {
            for ev in read_events(path)? {
                study.replay(ev)?;
            }
        }
        study.log = Some(std::fs::OpenOptions::new().create(true).append(true).open(path)?);
        Ok(study)
    }

    /// Replaces the wall clock, for tests that need controlled time.
    pub fn with_clock(mut self, clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn config(&self) -> &StudyConfig {
        &self.cfg
    }

    pub fn events(&self) -> &[StudyEvent] {
        &self.events
    }

    fn replay(&mut self, ev: StudyEvent) -> Result<()> {
        if !self.sessions.contains_key(&ev.session_id) {
            self.insert_session(ev.session_id.clone(), &ev.reader_id, ev.role)?;
        }
        let session = self.sessions.get_mut(&ev.session_id).expect("inserted");
        let phase = match &ev.event {
            EventKind::Assigned => Phase::Served { at: parse_ts(&ev.timestamp)? },
            EventKind::ReportSubmitted {
                server_elapsed_s,
                idempotency_key,
                ..
            } => Phase::Reported {
                key: idempotency_key.clone(),
                ack: ReportAck {
                    case_id: ev.case_id.clone(),
                    server_elapsed_s: *server_elapsed_s,
                },
            },
            EventKind::FeedbackSubmitted(_) => Phase::Done,
        };
        session.phases.insert(ev.case_id.clone(), phase);
        self.events.push(ev);
        Ok(())
    }

    fn insert_session(&mut self, id: String, reader_id: &str, role: Role) -> Result<()> {
        let assignments = assign_cases(&self.cfg, reader_id, role)?;
        self.sessions.insert(
            id,
            Session {
                reader_id: reader_id.to_string(),
                role,
                assignments,
                phases: HashMap::new(),
            },
        );
        Ok(())
    }

    /// Starts a session, or resumes the existing one for the same reader.
    pub fn create_session(&mut self, reader_id: &str, role: Role) -> Result<String> {
        if reader_id.trim().is_empty() {
            return Err(StudyError::Invalid("reader_id is empty".into()));
        }
        if let Some((id, s)) = self.sessions.iter().find(|(_, s)| s.reader_id == reader_id) {
            if s.role != role {
                return Err(StudyError::Protocol(format!("reader {reader_id} already registered with another role")));
            }
            return Ok(id.clone());
        }
        let id = uuid::Uuid::new_v4().to_string();
        self.insert_session(id.clone(), reader_id, role)?;
        Ok(id)
    }

    fn session(&self, id: &str) -> Result<&Session> {
        self.sessions
            .get(id)
            .ok_or_else(|| StudyError::UnknownSession(id.to_string()))
    }

    fn append(&mut self, session_id: &str, case_id: &str, arm: Arm, event: EventKind, now: DateTime<Utc>) -> Result<()> {
        let s = self.session(session_id)?;
        let ev = StudyEvent {
            seq: self.events.len() as u64,
            timestamp: now.to_rfc3339_opts(SecondsFormat::Millis, true),
            session_id: session_id.to_string(),
            reader_id: s.reader_id.clone(),
            role: s.role,
            case_id: case_id.to_string(),
            arm,
            event,
        };
        if let Some(f) = self.log.as_mut() {
            let mut line = serde_json::to_vec(&ev)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.flush()?;
        }
        self.events.push(ev);
        Ok(())
    }

    fn payload(&self, a: &Assignment) -> CasePayload {
        let case = self.cfg.case(&a.case_id).expect("assigned cases exist");
        let prefill = match a.arm {
            Arm::Scratch => String::new(),
            Arm::ModelDraft => case.model_draft.clone(),
            Arm::ResidentDraft => case.resident_draft.clone().unwrap_or_default(),
        };
        CasePayload {
            case_id: case.case_id.clone(),
            image_urls: (0..case.images.len())
                .map(|i| format!("/images/{}/{i}", case.case_id))
                .collect(),
            indication: case.indication.clone(),
            prefill,
        }
    }

    /// The session's current case; `None` once every case is done. Asking
    /// again before finishing returns the same case without restarting its
    /// timer.
    pub fn next_case(&mut self, session_id: &str) -> Result<Option<CasePayload>> {
        let s = self.session(session_id)?;
        let Some(a) = s.current().cloned() else {
            return Ok(None);
        };
        if !s.phases.contains_key(&a.case_id) {
            let now = (self.clock)();
            self.append(session_id, &a.case_id, a.arm, EventKind::Assigned, now)?;
            let s = self.sessions.get_mut(session_id).expect("checked");
            s.phases.insert(a.case_id.clone(), Phase::Served { at: now });
        }
        Ok(Some(self.payload(&a)))
    }

    pub fn submit_report(
        &mut self,
        session_id: &str,
        case_id: &str,
        text: &str,
        client_elapsed_s: Option<f64>,
        idempotency_key: Option<String>,
    ) -> Result<ReportAck> {
        let s = self.session(session_id)?;
        let arm = s.assignment(case_id)?.arm;
        let served_at = match s.phases.get(case_id) {
            None => return Err(StudyError::Protocol(format!("case {case_id} has not been served"))),
            Some(Phase::Reported { key: Some(k), ack }) if idempotency_key.as_deref() == Some(k.as_str()) => {
                return Ok(ack.clone());
            }
            Some(Phase::Reported { .. } | Phase::Done) => {
                return Err(StudyError::Protocol(format!("report for {case_id} already submitted")));
            }
            Some(Phase::Served { at }) => *at,
        };
        if text.trim().is_empty() {
            return Err(StudyError::Invalid("report text is empty".into()));
        }
        if let Some(c) = client_elapsed_s {
            if !(c.is_finite() && c >= 0.0) {
                return Err(StudyError::Invalid("client_elapsed_s must be a non-negative number".into()));
            }
        }
        let now = (self.clock)();
        let ms = (now - served_at).num_milliseconds().max(1);
        let ack = ReportAck {
            case_id: case_id.to_string(),
            server_elapsed_s: ms as f64 / 1000.0,
        };
        self.append(
            session_id,
            case_id,
            arm,
            EventKind::ReportSubmitted {
                text: text.to_string(),
                server_elapsed_s: ack.server_elapsed_s,
                client_elapsed_s,
                idempotency_key: idempotency_key.clone(),
            },
            now,
        )?;
        let s = self.sessions.get_mut(session_id).expect("checked");
        s.phases.insert(
            case_id.to_string(),
            Phase::Reported {
                key: idempotency_key,
                ack: ack.clone(),
            },
        );
        Ok(ack)
    }

    pub fn submit_feedback(&mut self, session_id: &str, case_id: &str, mut feedback: Feedback) -> Result<()> {
        let s = self.session(session_id)?;
        let arm = s.assignment(case_id)?.arm;
        match s.phases.get(case_id) {
            Some(Phase::Reported { .. }) => {}
            Some(Phase::Done) => {
                return Err(StudyError::Protocol(format!("feedback for {case_id} already submitted")));
            }
            _ => {
                return Err(StudyError::Protocol(format!(
                    "feedback for {case_id} before its report was submitted"
                )));
            }
        }
        if !LIKERT_VALUES.contains(&feedback.likert) {
            return Err(StudyError::Invalid(format!(
                "likert must be one of {LIKERT_VALUES:?}, got {}",
                feedback.likert
            )));
        }
        feedback.reasons.sort();
        feedback.reasons.dedup();
        let now = (self.clock)();
        self.append(session_id, case_id, arm, EventKind::FeedbackSubmitted(feedback), now)?;
        let s = self.sessions.get_mut(session_id).expect("checked");
        s.phases.insert(case_id.to_string(), Phase::Done);
        Ok(())
    }

    /// Absolute path of the `index`-th image of a case.
    pub fn image_path(&self, case_id: &str, index: usize) -> Option<std::path::PathBuf> {
        let case = self.cfg.case(case_id)?;
        case.images.get(index).map(|p| self.cfg.image_root.join(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::tests::pool;
    use crate::events::{Efficiency, Reason};
    use std::sync::atomic::{AtomicI64, Ordering};
    use std::sync::Arc;

    fn fb(likert: i32) -> Feedback {
        Feedback {
            likert,
            reasons: vec![Reason::FalsePrediction],
            efficiency: Efficiency {
                writing: true,
                interpretation: false,
            },
            comment: String::new(),
        }
    }

    fn ticking() -> (Arc<AtomicI64>, impl Fn() -> DateTime<Utc> + Send + Sync) {
        let ms = Arc::new(AtomicI64::new(1_700_000_000_000));
        let c = ms.clone();
        (ms, move || DateTime::from_timestamp_millis(c.load(Ordering::SeqCst)).unwrap())
    }

    #[test]
    fn state_machine_order() {
        let (ms, clock) = ticking();
        let mut st = Study::in_memory(pool(50, 25)).unwrap().with_clock(clock);
        let sid = st.create_session("r1", Role::Resident).unwrap();
        let case = st.next_case(&sid).unwrap().unwrap();
        let err = st.submit_feedback(&sid, &case.case_id, fb(5)).unwrap_err();
        assert!(matches!(err, StudyError::Protocol(_)));
        assert!(matches!(
            st.submit_report(&sid, "nope", "x", None, None),
            Err(StudyError::UnknownCase(_))
        ));
        // Re-fetching does not restart the timer.
        ms.fetch_add(2_000, Ordering::SeqCst);
        assert_eq!(st.next_case(&sid).unwrap().unwrap(), case);
        ms.fetch_add(1_500, Ordering::SeqCst);
        let ack = st.submit_report(&sid, &case.case_id, "final", Some(3.4), None).unwrap();
        assert_eq!(ack.server_elapsed_s, 3.5);
        assert!(matches!(
            st.submit_report(&sid, &case.case_id, "again", None, None),
            Err(StudyError::Protocol(_))
        ));
        assert!(matches!(st.submit_feedback(&sid, &case.case_id, fb(3)), Err(StudyError::Invalid(_))));
        st.submit_feedback(&sid, &case.case_id, fb(5)).unwrap();
        let kinds: Vec<&str> = st
            .events()
            .iter()
            .filter(|e| e.case_id == case.case_id)
            .map(|e| e.event.name())
            .collect();
        assert_eq!(kinds, ["assigned", "report_submitted", "feedback_submitted"]);
        assert_ne!(st.next_case(&sid).unwrap().unwrap().case_id, case.case_id);
    }

    #[test]
    fn idempotent_report_retry() {
        let mut st = Study::in_memory(pool(50, 25)).unwrap();
        let sid = st.create_session("r1", Role::Resident).unwrap();
        let case = st.next_case(&sid).unwrap().unwrap();
        let a = st.submit_report(&sid, &case.case_id, "t", None, Some("k1".into())).unwrap();
        let b = st.submit_report(&sid, &case.case_id, "t", None, Some("k1".into())).unwrap();
        assert_eq!(a, b);
        assert_eq!(st.events().len(), 2);
    }

    #[test]
    fn prefill_follows_arm_and_sessions_finish() {
        let cfg = pool(50, 25);
        let mut st = Study::in_memory(cfg.clone()).unwrap();
        let sid = st.create_session("a1", Role::Attending).unwrap();
        assert_eq!(st.create_session("a1", Role::Attending).unwrap(), sid);
        let plan = assign_cases(&cfg, "a1", Role::Attending).unwrap();
        for a in &plan {
            let p = st.next_case(&sid).unwrap().unwrap();
            assert_eq!(p.case_id, a.case_id);
            let case = cfg.case(&a.case_id).unwrap();
            match a.arm {
                Arm::ModelDraft => assert_eq!(p.prefill, case.model_draft),
                Arm::ResidentDraft => assert_eq!(Some(&p.prefill), case.resident_draft.as_ref()),
                Arm::Scratch => assert_eq!(p.prefill, ""),
            }
            st.submit_report(&sid, &p.case_id, "done", None, None).unwrap();
            st.submit_feedback(&sid, &p.case_id, fb(0)).unwrap();
        }
        assert_eq!(st.next_case(&sid).unwrap(), None);
        assert_eq!(st.events().len(), 90);
    }

    #[test]
    fn log_replay_restores_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let cfg = pool(50, 25);
        let (sid, case) = {
            let mut st = Study::open(cfg.clone(), &path).unwrap();
            let sid = st.create_session("r1", Role::Resident).unwrap();
            let case = st.next_case(&sid).unwrap().unwrap();
            st.submit_report(&sid, &case.case_id, "t", None, None).unwrap();
            (sid, case)
        };
        let mut st = Study::open(cfg, &path).unwrap();
        assert_eq!(st.events().len(), 2);
        assert!(matches!(
            st.submit_report(&sid, &case.case_id, "t", None, None),
            Err(StudyError::Protocol(_))
        ));
        st.submit_feedback(&sid, &case.case_id, fb(10)).unwrap();
        assert_eq!(read_events(&path).unwrap().len(), 3);
    }
}
