//! Study statistics, computed from the event log alone.

use std::collections::{BTreeMap, BTreeSet};

use cxr_core::metrics::{agreement_ratio, icc, mann_whitney, mean_sd};
use serde::{Deserialize, Serialize};

use crate::config::{Arm, Role};
use crate::events::{EventKind, Feedback, Reason, StudyEvent};
use crate::{Result, StudyError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

fn summarize(values: &[f64]) -> Option<MeanSd> {
    let (mean, sd) = mean_sd(values).ok()?;
    Some(MeanSd {
        n: values.len(),
        mean,
        sd,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencySplit {
    pub writing_only: f64,
    pub interpretation_only: f64,
    pub both: f64,
    pub neither: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    /// Server-measured seconds per report.
    pub time_s: Option<MeanSd>,
    pub likert: Option<MeanSd>,
    /// Share of ratings at "agree" or "strongly agree".
    pub agreement_ratio: Option<f64>,
    /// Share of feedback citing at least one content (or style) reason.
    pub content_edit_share: Option<f64>,
    pub style_edit_share: Option<f64>,
    /// Share of feedback citing each reason.
    pub reason_shares: BTreeMap<String, f64>,
    pub efficiency: Option<EfficiencySplit>,
}

/// Two-arm timing comparison within a role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Comparison {
    Tested {
        arm_a: Arm,
        arm_b: Arm,
        u: f64,
        p: f64,
        exact: bool,
    },
    InsufficientData {
        arm_a: Arm,
        arm_b: Arm,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleReport {
    pub arms: BTreeMap<Arm, ArmStats>,
    pub time_comparison: Comparison,
    /// ICC(2,1) of model-draft ratings over cases rated by every reader
    /// of this role; `None` when fewer than two readers share two cases.
    pub icc_model_draft: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub events: usize,
    pub readers: usize,
    pub roles: BTreeMap<Role, RoleReport>,
}

fn check_order(events: &[StudyEvent]) -> Result<()> {
    let mut seen: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for ev in events {
        let stage = seen.entry((&ev.session_id, &ev.case_id)).or_insert(0);
        let want = match ev.event {
            EventKind::Assigned => 0,
            EventKind::ReportSubmitted { .. } => 1,
            EventKind::FeedbackSubmitted(_) => 2,
        };
        if *stage != want {
            return Err(StudyError::Protocol(format!(
                "event {} ({}) for case {} is out of order",
                ev.seq,
                ev.event.name(),
                ev.case_id
            )));
        }
        *stage += 1;
    }
    Ok(())
}

fn arm_stats(times: &[f64], feedback: &[&Feedback]) -> ArmStats {
    let likert: Vec<f64> = feedback.iter().map(|f| f.likert as f64).collect();
    let likert_i: Vec<i32> = feedback.iter().map(|f| f.likert).collect();
    let n = feedback.len() as f64;
    let share = |pred: &dyn Fn(&Feedback) -> bool| {
        (!feedback.is_empty()).then(|| feedback.iter().filter(|f| pred(f)).count() as f64 / n)
    };
    let reason_shares = Reason::ALL
        .iter()
        .filter_map(|r| share(&|f: &Feedback| f.reasons.contains(r)).map(|s| (r.key(), s)))
        .collect();
    let efficiency = (!feedback.is_empty()).then(|| {
        let frac = |w: bool, i: bool| {
            feedback
                .iter()
                .filter(|f| f.efficiency.writing == w && f.efficiency.interpretation == i)
                .count() as f64
                / n
        };
        EfficiencySplit {
            writing_only: frac(true, false),
            interpretation_only: frac(false, true),
            both: frac(true, true),
            neither: frac(false, false),
        }
    });
    ArmStats {
        time_s: summarize(times),
        likert: summarize(&likert),
        agreement_ratio: agreement_ratio(&likert_i).ok(),
        content_edit_share: share(&|f: &Feedback| f.reasons.iter().any(|r| r.is_content())),
        style_edit_share: share(&|f: &Feedback| f.reasons.iter().any(|r| !r.is_content())),
        reason_shares,
        efficiency,
    }
}

fn compare(times: &BTreeMap<Arm, Vec<f64>>, arm_a: Arm, arm_b: Arm) -> Comparison {
    let empty = Vec::new();
    let a = times.get(&arm_a).unwrap_or(&empty);
    let b = times.get(&arm_b).unwrap_or(&empty);
    if a.len() < 2 || b.len() < 2 {
        return Comparison::InsufficientData { arm_a, arm_b };
    }
    match mann_whitney(a, b) {
        Ok(mw) => Comparison::Tested {
            arm_a,
            arm_b,
            u: mw.u,
            p: mw.p,
            exact: mw.exact,
        },
        Err(_) => Comparison::InsufficientData { arm_a, arm_b },
    }
}

fn shared_icc(ratings: &BTreeMap<String, BTreeMap<String, f64>>) -> Option<f64> {
    let readers: BTreeSet<&String> = ratings.values().flat_map(|m| m.keys()).collect();
    if readers.len() < 2 {
        return None;
    }
    let rows: Vec<Vec<f64>> = ratings
        .values()
        .filter(|m| m.len() == readers.len())
        .map(|m| m.values().copied().collect())
        .collect();
    icc(&rows).ok()
}

/// Per-role, per-arm statistics. Errors if the log is empty or any
/// (session, case) deviates from assigned, report, feedback order.
pub fn analyze(events: &[StudyEvent]) -> Result<StudyReport> {
    if events.is_empty() {
        return Err(StudyError::Invalid("event log is empty".into()));
    }
    check_order(events)?;
    let mut report = StudyReport {
        events: events.len(),
        readers: events.iter().map(|e| &e.reader_id).collect::<BTreeSet<_>>().len(),
        roles: BTreeMap::new(),
    };
    for role in [Role::Resident, Role::Attending] {
        let mine: Vec<&StudyEvent> = events.iter().filter(|e| e.role == role).collect();
        if mine.is_empty() {
            continue;
        }
        let mut times: BTreeMap<Arm, Vec<f64>> = BTreeMap::new();
        let mut feedback: BTreeMap<Arm, Vec<&Feedback>> = BTreeMap::new();
        let mut model_ratings: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for ev in &mine {
            match &ev.event {
                EventKind::ReportSubmitted { server_elapsed_s, .. } => {
                    times.entry(ev.arm).or_default().push(*server_elapsed_s);
                }
                EventKind::FeedbackSubmitted(f) => {
                    feedback.entry(ev.arm).or_default().push(f);
                    if ev.arm == Arm::ModelDraft {
                        model_ratings
                            .entry(ev.case_id.clone())
                            .or_default()
                            .insert(ev.reader_id.clone(), f.likert as f64);
                    }
                }
                EventKind::Assigned => {}
            }
        }
        let arms: BTreeSet<Arm> = mine.iter().map(|e| e.arm).collect();
        let stats = arms
            .iter()
            .map(|&arm| {
                let t = times.get(&arm).map(Vec::as_slice).unwrap_or(&[]);
                let f = feedback.get(&arm).map(Vec::as_slice).unwrap_or(&[]);
                (arm, arm_stats(t, f))
            })
            .collect();
        let baseline = match role {
            Role::Resident => Arm::Scratch,
            Role::Attending => Arm::ResidentDraft,
        };
        report.roles.insert(
            role,
            RoleReport {
                arms: stats,
                time_comparison: compare(&times, baseline, Arm::ModelDraft),
                icc_model_draft: shared_icc(&model_ratings),
            },
        );
    }
    Ok(report)
}
