//! Single-file checkpoints: an 8-byte magic, a little-endian u64 header
//! length, a JSON header, then every parameter as little-endian f32.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use candle_core::{DType, Device};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::model::Model;
use crate::params::ParamStore;
use crate::{ModelError, Result};

const MAGIC: &[u8; 8] = b"CXRCKPT1";

/// Enough to resume a ChaCha8 stream exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// Word position, stored as a decimal string because it is a u128.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| ModelError::Checkpoint(format!("bad word_pos {:?}", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Completed training stages, oldest first.
    pub lineage: Vec<String>,
    pub rng: Option<RngState>,
    /// Free-form extras (training summary, data hashes).
    #[serde(default)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    meta: CheckpointMeta,
    param_hash: String,
    tensors: Vec<TensorEntry>,
}

pub struct Checkpoint {
    pub model: Model,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn new(model: Model, meta: CheckpointMeta) -> Self {
        Self { model, meta }
    }

    pub fn last_stage(&self) -> Option<&str> {
        self.meta.lineage.last().map(String::as_str)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let params = self.model.params();
        let tensors: Vec<TensorEntry> = params
            .iter()
            .map(|(name, var)| TensorEntry {
                name: name.to_string(),
                shape: var.dims().to_vec(),
            })
            .collect();
        let header = Header {
            config: self.model.config().clone(),
            meta: self.meta.clone(),
            param_hash: params.hash()?,
            tensors,
        };
        let header = serde_json::to_vec(&header)?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("tmp");
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        f.write_all(MAGIC)?;
        f.write_all(&(header.len() as u64).to_le_bytes())?;
        f.write_all(&header)?;
        for name in params.names() {
            for x in params.values_f32(name)? {
                f.write_all(&x.to_le_bytes())?;
            }
        }
        f.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Loads and verifies the parameter hash. Parameters start frozen.
    pub fn load(path: &Path, dtype: DType) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ModelError::Checkpoint("bad magic".into()));
        }
        let mut len = [0u8; 8];
        f.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut header = vec![0u8; len];
        f.read_exact(&mut header)?;
        let header: Header = serde_json::from_slice(&header)?;
        let mut params = ParamStore::new(dtype, Device::Cpu);
        for t in &header.tensors {
            let n: usize = t.shape.iter().product();
            let mut buf = vec![0u8; n * 4];
            f.read_exact(&mut buf)
                .map_err(|_| ModelError::Checkpoint(format!("truncated at {}", t.name)))?;
            let values = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            params.insert(&t.name, &t.shape, values)?;
        }
        if f.read(&mut [0u8; 1])? != 0 {
            return Err(ModelError::Checkpoint("trailing bytes".into()));
        }
        if params.hash()? != header.param_hash {
            return Err(ModelError::Checkpoint("parameter hash mismatch".into()));
        }
        let model = Model::from_params(header.config, params)?;
        Ok(Self {
            model,
            meta: header.meta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn round_trip_preserves_hash_meta_and_rng() {
        let model = Model::new(ModelConfig::tiny(), 5, DType::F32).unwrap();
        let hash = model.params().hash().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let _: u64 = rng.random();
        let meta = CheckpointMeta {
            lineage: vec!["lm_pretrain".into()],
            rng: Some(RngState::capture(&rng)),
            extra: BTreeMap::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        Checkpoint::new(model, meta.clone()).save(&path).unwrap();
        let back = Checkpoint::load(&path, DType::F32).unwrap();
        assert_eq!(back.model.params().hash().unwrap(), hash);
        assert_eq!(back.meta, meta);
        assert_eq!(back.last_stage(), Some("lm_pretrain"));
        let mut resumed = back.meta.rng.unwrap().restore().unwrap();
        assert_eq!(resumed.random::<u64>(), rng.random::<u64>());
    }

    #[test]
    fn corrupted_payload_is_rejected() {
        let model = Model::new(ModelConfig::tiny(), 5, DType::F32).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let meta = CheckpointMeta {
            lineage: vec![],
            rng: None,
            extra: BTreeMap::new(),
        };
        Checkpoint::new(model, meta).save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x55;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(Checkpoint::load(&path, DType::F32), Err(ModelError::Checkpoint(_))));
        std::fs::write(&path, b"nope").unwrap();
        assert!(Checkpoint::load(&path, DType::F32).is_err());
    }
}
