use serde::{Deserialize, Serialize};

use crate::tokenizer::Tokenizer;
use crate::{ModelError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisionConfig {
    pub patch_size: usize,
    pub grid: (usize, usize),
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
}

impl VisionConfig {
    pub fn image_size(&self) -> (usize, usize) {
        (self.grid.0 * self.patch_size, self.grid.1 * self.patch_size)
    }

    pub fn num_patches(&self) -> usize {
        self.grid.0 * self.grid.1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextTowerConfig {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub vocab: usize,
    pub max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub vocab: usize,
    pub max_seq: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectorConfig {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vision: VisionConfig,
    pub text_tower: TextTowerConfig,
    pub decoder: DecoderConfig,
    pub projector: ProjectorConfig,
    /// Width of the shared image/text embedding used by the contrastive loss.
    pub embed_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vision: VisionConfig {
                patch_size: 16,
                grid: (4, 4),
                dim: 64,
                layers: 4,
                heads: 4,
            },
            text_tower: TextTowerConfig {
                dim: 64,
                layers: 2,
                heads: 4,
                vocab: Tokenizer::VOCAB,
                max_len: 160,
            },
            decoder: DecoderConfig {
                dim: 128,
                layers: 4,
                heads: 4,
                vocab: Tokenizer::VOCAB,
                max_seq: 256,
            },
            projector: ProjectorConfig {
                in_dim: 64,
                hidden_dim: 128,
                out_dim: 128,
            },
            embed_dim: 64,
        }
    }
}

impl ModelConfig {
    /// A very small configuration for tests.
    pub fn tiny() -> Self {
        Self {
            vision: VisionConfig {
                patch_size: 4,
                grid: (2, 2),
                dim: 8,
                layers: 1,
                heads: 2,
            },
            text_tower: TextTowerConfig {
                dim: 8,
                layers: 1,
                heads: 2,
                vocab: Tokenizer::VOCAB,
                max_len: 32,
            },
            decoder: DecoderConfig {
                dim: 8,
                layers: 1,
                heads: 2,
                vocab: Tokenizer::VOCAB,
                max_seq: 48,
            },
            projector: ProjectorConfig {
                in_dim: 8,
                hidden_dim: 8,
                out_dim: 8,
            },
            embed_dim: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        let v = &self.vision;
        let dims = [
            v.patch_size,
            v.grid.0,
            v.grid.1,
            v.dim,
            v.layers,
            v.heads,
            self.text_tower.dim,
            self.text_tower.layers,
            self.text_tower.heads,
            self.text_tower.max_len,
            self.decoder.dim,
            self.decoder.layers,
            self.decoder.heads,
            self.decoder.max_seq,
            self.projector.in_dim,
            self.projector.hidden_dim,
            self.projector.out_dim,
            self.embed_dim,
        ];
        if dims.contains(&0) {
            return bad("all dimensions must be positive");
        }
        if self.projector.in_dim != v.dim {
            return bad("projector.in_dim must equal vision.dim");
        }
        if self.projector.out_dim != self.decoder.dim {
            return bad("projector.out_dim must equal decoder.dim");
        }
        for (name, dim, heads) in [
            ("vision", v.dim, v.heads),
            ("text_tower", self.text_tower.dim, self.text_tower.heads),
            ("decoder", self.decoder.dim, self.decoder.heads),
        ] {
            if dim % heads != 0 {
                return Err(ModelError::Config(format!("{name}.dim must be divisible by heads")));
            }
        }
        if self.text_tower.vocab != Tokenizer::VOCAB || self.decoder.vocab != Tokenizer::VOCAB {
            return Err(ModelError::Config(format!("vocab must be {}", Tokenizer::VOCAB)));
        }
        if self.decoder.max_seq <= v.num_patches() {
            return bad("decoder.max_seq must leave room after the image tokens");
        }
        Ok(())
    }
}
