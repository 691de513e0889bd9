//! Study definition: the case pool and per-role reading plans.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Result, StudyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Resident,
    Attending,
}

/// Where the text a reader starts from came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Blank editor.
    Scratch,
    /// Draft written by a resident.
    ResidentDraft,
    /// Draft generated by the model.
    ModelDraft,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Scratch => "scratch",
            Arm::ResidentDraft => "resident_draft",
            Arm::ModelDraft => "model_draft",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseRecord {
    pub case_id: String,
    /// Image paths, relative to the config's `image_root`.
    pub images: Vec<PathBuf>,
    pub indication: String,
    pub model_draft: String,
    #[serde(default)]
    pub resident_draft: Option<String>,
}

/// Number of cases a reader gets in each arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plan {
    #[serde(default)]
    pub scratch: usize,
    #[serde(default)]
    pub resident_draft: usize,
    #[serde(default)]
    pub model_draft: usize,
}

impl Plan {
    pub const RESIDENT: Plan = Plan {
        scratch: 10,
        resident_draft: 0,
        model_draft: 20,
    };
    pub const ATTENDING: Plan = Plan {
        scratch: 0,
        resident_draft: 10,
        model_draft: 20,
    };

    pub fn total(&self) -> usize {
        self.scratch + self.resident_draft + self.model_draft
    }

    pub fn count(&self, arm: Arm) -> usize {
        match arm {
            Arm::Scratch => self.scratch,
            Arm::ResidentDraft => self.resident_draft,
            Arm::ModelDraft => self.model_draft,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub cases: Vec<CaseRecord>,
    pub resident_plan: Plan,
    pub attending_plan: Plan,
    pub seed: u64,
    pub image_root: PathBuf,
}

impl StudyConfig {
    pub fn new(cases: Vec<CaseRecord>, image_root: PathBuf, seed: u64) -> Self {
        Self {
            cases,
            resident_plan: Plan::RESIDENT,
            attending_plan: Plan::ATTENDING,
            seed,
            image_root,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn plan(&self, role: Role) -> Plan {
        match role {
            Role::Resident => self.resident_plan,
            Role::Attending => self.attending_plan,
        }
    }

    pub fn case(&self, id: &str) -> Option<&CaseRecord> {
        self.cases.iter().find(|c| c.case_id == id)
    }

    /// Residents write 10 reports from scratch and edit 20 model drafts;
    /// attendings edit 10 resident drafts and 20 model drafts.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(StudyError::Config(m));
        if self.resident_plan != Plan::RESIDENT {
            return err(format!("resident plan must be {:?}", Plan::RESIDENT));
        }
        if self.attending_plan != Plan::ATTENDING {
            return err(format!("attending plan must be {:?}", Plan::ATTENDING));
        }
        let ids: BTreeSet<&str> = self.cases.iter().map(|c| c.case_id.as_str()).collect();
        if ids.len() != self.cases.len() {
            return err("duplicate case ids".into());
        }
        for c in &self.cases {
            if c.images.is_empty() {
                return err(format!("case {} has no images", c.case_id));
            }
            if c.model_draft.trim().is_empty() {
                return err(format!("case {} has no model draft", c.case_id));
            }
        }
        for role in [Role::Resident, Role::Attending] {
            let plan = self.plan(role);
            if plan.total() > self.cases.len() {
                return err(format!(
                    "{role:?} plan needs {} cases, pool has {}",
                    plan.total(),
                    self.cases.len()
                ));
            }
            let with_resident = self.cases.iter().filter(|c| c.resident_draft.is_some()).count();
            if plan.resident_draft > with_resident {
                return err(format!(
                    "{role:?} plan needs {} resident drafts, pool has {with_resident}",
                    plan.resident_draft
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn pool(n: usize, with_resident: usize) -> StudyConfig {
        let cases = (0..n)
            .map(|i| CaseRecord {
                case_id: format!("c{i:02}"),
                images: vec![PathBuf::from(format!("c{i:02}.png"))],
                indication: format!("indication {i}"),
                model_draft: format!("model draft {i}"),
                resident_draft: (i < with_resident).then(|| format!("resident draft {i}")),
            })
            .collect();
        StudyConfig::new(cases, PathBuf::from("."), 7)
    }

    #[test]
    fn plans_are_enforced() {
        assert!(pool(50, 25).validate().is_ok());
        let mut c = pool(50, 25);
        c.resident_plan.scratch = 11;
        assert!(c.validate().is_err());
        assert!(pool(29, 25).validate().is_err());
        assert!(pool(50, 9).validate().is_err());
    }
}
