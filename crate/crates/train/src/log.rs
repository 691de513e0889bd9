//! Training log, written as line-delimited JSON.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::stage::Stage;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    /// 1-based optimizer step; the lr is `lr_schedule(step, total_steps, ..)`.
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub grad_norm_pre_clip: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_loss: Option<f64>,
    pub trainable: Vec<String>,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header { stage: Stage, total_steps: usize },
    Step(StepRecord),
    Epoch(EpochRecord),
    Done { wall_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub stage: Stage,
    pub total_steps: usize,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub wall_s: f64,
}

impl TrainLog {
    pub fn new(stage: Stage, total_steps: usize) -> Self {
        Self {
            stage,
            total_steps,
            steps: Vec::new(),
            epochs: Vec::new(),
            wall_s: 0.0,
        }
    }

    pub fn first_epoch_loss(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.train_loss)
    }

    pub fn last_epoch_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut put = |line: &Line| -> Result<()> {
            serde_json::to_writer(&mut f, line)?;
            f.write_all(b"\n")?;
            Ok(())
        };
        put(&Line::Header {
            stage: self.stage,
            total_steps: self.total_steps,
        })?;
        let mut steps = self.steps.iter().peekable();
        for e in &self.epochs {
            while let Some(s) = steps.next_if(|s| s.epoch <= e.epoch) {
                put(&Line::Step(s.clone()))?;
            }
            put(&Line::Epoch(e.clone()))?;
        }
        for s in steps {
            put(&Line::Step(s.clone()))?;
        }
        put(&Line::Done { wall_s: self.wall_s })?;
        f.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut log: Option<TrainLog> = None;
        for line in f.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line)?;
            match (parsed, log.as_mut()) {
                (Line::Header { stage, total_steps }, None) => log = Some(TrainLog::new(stage, total_steps)),
                (Line::Step(s), Some(l)) => l.steps.push(s),
                (Line::Epoch(e), Some(l)) => l.epochs.push(e),
                (Line::Done { wall_s }, Some(l)) => l.wall_s = wall_s,
                _ => return Err(crate::TrainError::Config("train log must start with one header".into())),
            }
        }
        log.ok_or_else(|| crate::TrainError::Config("empty train log".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let mut log = TrainLog::new(Stage::Align, 2);
        for step in 1..=2 {
            log.steps.push(StepRecord {
                epoch: step,
                step,
                lr: 0.1 * step as f64,
                loss: 1.0 / step as f64,
                grad_norm: 0.5,
                grad_norm_pre_clip: 0.5,
            });
            log.epochs.push(EpochRecord {
                epoch: step,
                train_loss: 1.0,
                eval_loss: None,
                trainable: vec!["projector".into()],
                wall_s: 0.25,
            });
        }
        log.wall_s = 1.5;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        log.write_jsonl(&p).unwrap();
        assert_eq!(TrainLog::read_jsonl(&p).unwrap(), log);
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().next().unwrap().contains("\"kind\":\"header\""));
    }
}
