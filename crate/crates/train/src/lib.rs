//! Staged training: text-only decoder pretraining, contrastive image/text
//! pretraining, projector alignment and instruction tuning.

pub mod config;
pub mod data;
pub mod log;
pub mod optim;
pub mod pipeline;
pub mod retrieval;
pub mod run;
pub mod schedule;
pub mod stage;

pub use config::StageConfig;
pub use data::{ImageText, StageData};
pub use log::{EpochRecord, StepRecord, TrainLog};
pub use optim::{clip_grad_norm, AdamW};
pub use pipeline::{build_stage_data, run_pipeline, PipelineConfig, PipelineOutcome, StageDataOptions};
pub use retrieval::{retrieval_top1, RetrievalResult};
pub use run::{check_order, run_stage};
pub use schedule::lr_schedule;
pub use stage::{freeze_policy, Stage};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid stage config: {0}")]
    Config(String),
    #[error("stage-order violation: {stage} needs a checkpoint ending in {expected}, found {found}")]
    StageOrder {
        stage: Stage,
        expected: String,
        found: String,
    },
    #[error("{stage} cannot train on {got} data")]
    DataMismatch { stage: Stage, got: &'static str },
    #[error("no training examples")]
    EmptyData,
    #[error("total_steps must be positive")]
    ZeroSteps,
    #[error("step {step} outside 0..={total}")]
    StepRange { step: usize, total: usize },
    #[error("unknown stage {0:?}")]
    UnknownStage(String),
    #[error("epochs are numbered from 1")]
    EpochZero,
    #[error(transparent)]
    Model(#[from] cxr_model::ModelError),
    #[error(transparent)]
    Candle(#[from] candle_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;
