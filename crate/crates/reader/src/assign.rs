//! Seeded, per-reader case assignment.

use cxr_core::seed::rng_for;
use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::config::{Arm, Role, StudyConfig};
use crate::{Result, StudyError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub case_id: String,
    pub arm: Arm,
}

/// Draws a reader's cases without replacement and returns them in a random
/// display order. The result depends only on the study seed, the reader id
/// and the role.
pub fn assign_cases(cfg: &StudyConfig, reader_id: &str, role: Role) -> Result<Vec<Assignment>> {
    let plan = cfg.plan(role);
    let role_key = format!("{role:?}");
    let mut rng = rng_for(cfg.seed, &["assign", reader_id, &role_key]);
    let with_resident: Vec<&str> = cfg
        .cases
        .iter()
        .filter(|c| c.resident_draft.is_some())
        .map(|c| c.case_id.as_str())
        .collect();
    if plan.resident_draft > with_resident.len() || plan.total() > cfg.cases.len() {
        return Err(StudyError::Config(format!("{role:?} plan exceeds the case pool")));
    }
    let mut out: Vec<Assignment> = with_resident
        .choose_multiple(&mut rng, plan.resident_draft)
        .map(|id| Assignment {
            case_id: id.to_string(),
            arm: Arm::ResidentDraft,
        })
        .collect();
    let rest: Vec<&str> = cfg
        .cases
        .iter()
        .map(|c| c.case_id.as_str())
        .filter(|id| !out.iter().any(|a| a.case_id == *id))
        .collect();
    let picked: Vec<&&str> = rest
        .choose_multiple(&mut rng, plan.scratch + plan.model_draft)
        .collect();
    for (i, id) in picked.into_iter().enumerate() {
        out.push(Assignment {
            case_id: id.to_string(),
            arm: if i < plan.scratch { Arm::Scratch } else { Arm::ModelDraft },
        });
    }
    out.shuffle(&mut rng);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::tests::pool;
    use std::collections::BTreeSet;

    fn count(a: &[Assignment], arm: Arm) -> usize {
        a.iter().filter(|x| x.arm == arm).count()
    }

    #[test]
    fn plan_sizes_and_no_repeats() {
        let cfg = pool(50, 25);
        let r = assign_cases(&cfg, "r1", Role::Resident).unwrap();
        assert_eq!((count(&r, Arm::Scratch), count(&r, Arm::ModelDraft), r.len()), (10, 20, 30));
        let a = assign_cases(&cfg, "a1", Role::Attending).unwrap();
        assert_eq!((count(&a, Arm::ResidentDraft), count(&a, Arm::ModelDraft)), (10, 20));
        for list in [&r, &a] {
            let ids: BTreeSet<&str> = list.iter().map(|x| x.case_id.as_str()).collect();
            assert_eq!(ids.len(), 30);
        }
        for x in a.iter().filter(|x| x.arm == Arm::ResidentDraft) {
            assert!(cfg.case(&x.case_id).unwrap().resident_draft.is_some());
        }
    }

    #[test]
    fn seeded() {
        let cfg = pool(50, 25);
        assert_eq!(
            assign_cases(&cfg, "r1", Role::Resident).unwrap(),
            assign_cases(&cfg, "r1", Role::Resident).unwrap()
        );
        assert_ne!(
            assign_cases(&cfg, "r1", Role::Resident).unwrap(),
            assign_cases(&cfg, "r2", Role::Resident).unwrap()
        );
    }
}
