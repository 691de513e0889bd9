//! Pipeline stages and which components each one trains.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use cxr_model::Component;
use serde::{Deserialize, Serialize};

use crate::{Result, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    LmPretrain,
    Contrastive,
    Align,
    Instruct,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::LmPretrain, Stage::Contrastive, Stage::Align, Stage::Instruct];

    pub fn name(self) -> &'static str {
        match self {
            Stage::LmPretrain => "lm_pretrain",
            Stage::Contrastive => "contrastive",
            Stage::Align => "align",
            Stage::Instruct => "instruct",
        }
    }

    /// The stage whose checkpoint this one starts from.
    pub fn predecessor(self) -> Option<Stage> {
        match self {
            Stage::LmPretrain => None,
            Stage::Contrastive => Some(Stage::LmPretrain),
            Stage::Align => Some(Stage::Contrastive),
            Stage::Instruct => Some(Stage::Align),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = TrainError;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| TrainError::UnknownStage(s.to_string()))
    }
}

/// Trainable components for a stage at a 1-based epoch.
pub fn freeze_policy(stage: Stage, epoch: usize) -> Result<BTreeSet<Component>> {
    use Component::*;
    if epoch == 0 {
        return Err(TrainError::EpochZero);
    }
    Ok(match stage {
        Stage::LmPretrain => BTreeSet::from([Decoder]),
        Stage::Contrastive => BTreeSet::from([Vision, TextTower, Head]),
        Stage::Align => BTreeSet::from([Projector]),
        Stage::Instruct if epoch == 1 => BTreeSet::from([Vision, Projector, Decoder]),
        Stage::Instruct => BTreeSet::from([Projector, Decoder]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Component::*;

    #[test]
    fn policy_table() {
        assert_eq!(freeze_policy(Stage::Align, 1).unwrap(), BTreeSet::from([Projector]));
        assert!(freeze_policy(Stage::Instruct, 1).unwrap().contains(&Vision));
        for e in 2..=4 {
            let s = freeze_policy(Stage::Instruct, e).unwrap();
            assert!(!s.contains(&Vision));
            assert_eq!(s, BTreeSet::from([Projector, Decoder]));
        }
        for e in 1..=5 {
            assert_eq!(freeze_policy(Stage::LmPretrain, e).unwrap(), BTreeSet::from([Decoder]));
        }
        assert!(matches!(freeze_policy(Stage::Align, 0), Err(TrainError::EpochZero)));
    }

    #[test]
    fn names_round_trip_and_unknown_rejected() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!(matches!("finetune".parse::<Stage>(), Err(TrainError::UnknownStage(_))));
    }
}
