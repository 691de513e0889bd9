//! Source ingestion, quality control, instruction-triplet compilation and the
//! synthetic data generator.

mod compile;
mod ingest;
mod manifest;
mod mcq;
mod qc;
mod restructure;
pub mod synth;
mod tasks;
mod types;

pub use compile::{compile_samples, compile_task, CompileLog, CompiledSample, SampleAnswer, SkipEntry};
pub use ingest::{ingest_source, FieldMap, IngestOutput, LabelValueMap, Rejection, SourceDescriptor};
pub use manifest::{
    leakage_report, read_manifest, validate_splits, write_manifest, LeakLevel, LeakageEntry,
    LeakageReport, Manifest,
    ManifestHeader, ManifestStats, RecordIndex,
};
pub use mcq::{make_mcq, render_options, Mcq};
pub use qc::{qc_filter, FsProbe, ImageProbe, QcRejection, QcRule, QcRules};
pub use restructure::{restructure_report, RestructuredReport};
pub use tasks::{
    default_registry, default_templates, AnnotationKind, AnswerFormat, InstructionTemplate,
    TaskCategory, TaskKind, TaskRegistry, TaskSpec, PLACEHOLDERS,
};
pub use types::{
    Annotation, ImageRecord, PriorStudy, Progression, QaPair, Record, Section, Sections, Split,
    Triplet, View,
};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("empty report")]
    EmptyReport,
    #[error("insufficient distractor pool: need {needed} distinct distractors, have {available}")]
    InsufficientPool { needed: usize, available: usize },
    #[error("mcq needs at least two options, got k = {0}")]
    BadOptionCount(usize),
    #[error("unknown task id {0:?}")]
    UnknownTask(String),
    #[error("invalid template for task {task}: {reason}")]
    InvalidTemplate { task: String, reason: String },
    #[error("invalid record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("split leakage: {0}")]
    Leakage(LeakageReport),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}
