//! Per-stage hyperparameters. Defaults follow the reference training table;
//! batch sizes are scaled down for toy runs.

use std::collections::BTreeSet;
use std::path::Path;

use cxr_model::Component;
use serde::{Deserialize, Serialize};

use crate::stage::{freeze_policy, Stage};
use crate::{Result, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub stage: Stage,
    pub peak_lr: f64,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
    pub epochs: usize,
    pub batch: usize,
    pub grad_accum: usize,
    pub grad_clip: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    /// Components held frozen on top of the stage's freeze policy.
    #[serde(default)]
    pub freeze: BTreeSet<Component>,
    pub seed: u64,
}

impl StageConfig {
    pub fn defaults(stage: Stage) -> Self {
        let (peak_lr, epochs, weight_decay, batch) = match stage {
            Stage::LmPretrain => (2e-5, 3, 0.1, 32),
            Stage::Contrastive => (5e-4, 20, 0.2, 32),
            Stage::Align => (1e-4, 3, 0.1, 32),
            Stage::Instruct => (1e-5, 4, 0.1, 16),
        };
        Self {
            stage,
            peak_lr,
            weight_decay,
            warmup_ratio: 0.05,
            epochs,
            batch,
            grad_accum: 1,
            grad_clip: 1.0,
            betas: (0.9, 0.98),
            eps: 1e-6,
            freeze: BTreeSet::new(),
            seed: 0,
        }
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("stage config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return bad("warmup_ratio must lie in [0, 1]");
        }
        if self.batch == 0 || self.grad_accum == 0 || self.epochs == 0 {
            return bad("batch, grad_accum and epochs must be at least 1");
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return bad("peak_lr must be positive");
        }
        if !(self.grad_clip > 0.0) || self.weight_decay < 0.0 || !(self.eps > 0.0) {
            return bad("grad_clip and eps must be positive, weight_decay non-negative");
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad("betas must lie in [0, 1)");
        }
        if self.freeze.contains(&Component::Head) {
            return bad("freeze may only name vision, text_tower, projector or decoder");
        }
        Ok(())
    }

    /// Components updated during `epoch` (1-based).
    pub fn trainable(&self, epoch: usize) -> Result<BTreeSet<Component>> {
        Ok(freeze_policy(self.stage, epoch)?
            .difference(&self.freeze)
            .copied()
            .collect())
    }
}
