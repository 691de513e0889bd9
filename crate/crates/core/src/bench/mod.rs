//! Evaluation harness: build test-split items, run a model, score, report.

mod build;
mod report;
mod run;

pub use build::{build_eval_set, sample_from_triplet, BalanceRule};
pub use report::{compare, write_report, Comparison, ReportFiles};
pub use run::{run_task, EvalResult, Generator, GeneratorError, ItemRow, Oracle, RunConfig};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, SampleAnswer, TaskKind};
use crate::metrics::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTask {
    View,
    Temporal,
    DiseaseBinary,
    DiseaseSingle,
    DiseaseMulti,
    Finegrained,
    Vqa,
    Grounding,
    FindingsGen,
    FindingsSumm,
}

impl EvalTask {
    pub const ALL: [EvalTask; 10] = [
        EvalTask::View,
        EvalTask::Temporal,
        EvalTask::DiseaseBinary,
        EvalTask::DiseaseSingle,
        EvalTask::DiseaseMulti,
        EvalTask::Finegrained,
        EvalTask::Vqa,
        EvalTask::Grounding,
        EvalTask::FindingsGen,
        EvalTask::FindingsSumm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EvalTask::View => "view",
            EvalTask::Temporal => "temporal",
            EvalTask::DiseaseBinary => "disease_binary",
            EvalTask::DiseaseSingle => "disease_single",
            EvalTask::DiseaseMulti => "disease_multi",
            EvalTask::Finegrained => "finegrained",
            EvalTask::Vqa => "vqa",
            EvalTask::Grounding => "grounding",
            EvalTask::FindingsGen => "findings_gen",
            EvalTask::FindingsSumm => "findings_summ",
        }
    }

    pub fn kind(self) -> TaskKind {
        match self {
            EvalTask::View => TaskKind::ViewClassification,
            EvalTask::Temporal => TaskKind::Temporal,
            EvalTask::DiseaseBinary => TaskKind::DiseaseBinary,
            EvalTask::DiseaseSingle => TaskKind::DiseaseSingle,
            EvalTask::DiseaseMulti => TaskKind::DiseaseMulti,
            EvalTask::Finegrained => TaskKind::FineGrained,
            EvalTask::Vqa => TaskKind::Vqa,
            EvalTask::Grounding => TaskKind::Grounding,
            EvalTask::FindingsGen => TaskKind::FindingsGeneration,
            EvalTask::FindingsSumm => TaskKind::FindingsSummarization,
        }
    }

    pub fn from_kind(kind: TaskKind) -> Self {
        Self::ALL
            .into_iter()
            .find(|t| t.kind() == kind)
            .expect("every kind has a bench task")
    }

    pub fn is_mcq(self) -> bool {
        !matches!(self, EvalTask::Grounding | EvalTask::FindingsGen | EvalTask::FindingsSumm)
    }
}

impl fmt::Display for EvalTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EvalTask {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s || t.kind().default_id() == s)
            .ok_or_else(|| BenchError::UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub task: EvalTask,
    pub instruction: String,
    pub images: Vec<String>,
    pub options: Option<Vec<String>>,
    pub answer: SampleAnswer,
}

impl EvalItem {
    /// The ground-truth response text.
    pub fn reference(&self) -> String {
        match (&self.answer, &self.options) {
            (SampleAnswer::Option(i), Some(opts)) => opts[*i].clone(),
            (SampleAnswer::Box(b), _) => b.to_text(),
            (SampleAnswer::Text(t), _) => t.clone(),
            (SampleAnswer::Option(i), None) => format!("option {i}"),
        }
    }

    /// Reorders the options by `perm` (new position -> old position),
    /// re-rendering them inside the instruction and remapping the answer.
    pub fn permute_options(&self, perm: &[usize]) -> Option<EvalItem> {
        let (opts, SampleAnswer::Option(ans)) = (self.options.as_ref()?, &self.answer) else {
            return None;
        };
        let old = crate::corpus::render_options(opts);
        let new_opts: Vec<String> = perm.iter().map(|&i| opts[i].clone()).collect();
        let new_ans = perm.iter().position(|&i| i == *ans)?;
        let at = self.instruction.rfind(&old)?;
        let mut instruction = self.instruction.clone();
        instruction.replace_range(at..at + old.len(), &crate::corpus::render_options(&new_opts));
        Some(EvalItem {
            instruction,
            options: Some(new_opts),
            answer: SampleAnswer::Option(new_ans),
            ..self.clone()
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("unknown bench task {0:?}")]
    UnknownTask(String),
    #[error("record {0} is not in the test split")]
    NonTestRecord(String),
    #[error("item {id}: {reason}")]
    MalformedItem { id: String, reason: String },
    #[error("mismatched item sets: {0}")]
    Mismatch(String),
    #[error("no results to report")]
    NoResults,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
