//! A small multimodal model: a patch-transformer vision tower, a text tower
//! for contrastive pretraining, a two-layer projector and a causal byte-level
//! decoder that reads projected image tokens before the instruction.

pub mod checkpoint;
pub mod config;
pub mod generate;
pub mod images;
mod layers;
pub mod loss;
pub mod model;
pub mod params;
pub mod pos;
pub mod tokenizer;

pub use checkpoint::{Checkpoint, CheckpointMeta, RngState};
pub use config::{DecoderConfig, ModelConfig, ProjectorConfig, TextTowerConfig, VisionConfig};
pub use generate::ModelGenerator;
pub use images::ImageStore;
pub use loss::{lm_loss, siglip_loss};
pub use model::{Model, SeqExample};
pub use params::{Component, ParamStore};
pub use pos::resize_pos_embed;
pub use tokenizer::Tokenizer;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("image is {got:?}, model expects {expected:?}; resize first")]
    Resolution { expected: (usize, usize), got: (usize, usize) },
    #[error("sequence of {len} tokens exceeds max_seq {max}")]
    SeqTooLong { len: usize, max: usize },
    #[error("loss mask selects no positions")]
    EmptyMask,
    #[error("empty batch")]
    EmptyBatch,
    #[error("max_len must be at least 1")]
    BadMaxLen,
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("image {0} is not in the image store")]
    UnknownImage(String),
    #[error(transparent)]
    Candle(#[from] candle_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, ModelError>;
