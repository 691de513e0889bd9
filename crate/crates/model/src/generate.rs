//! Greedy decoding and the benchmark adapter.

use candle_core::{DType, Tensor};
use cxr_core::bench::{Generator, GeneratorError};

use crate::images::ImageStore;
use crate::model::Model;
use crate::tokenizer::Tokenizer;
use crate::{ModelError, Result};

impl Model {
    /// Greedy decoding of up to `max_len` tokens; stops early at EOS.
    /// Ties in the argmax go to the lowest token id.
    pub fn generate_ids(&self, images: &[&[f32]], instruction: &str, max_len: usize) -> Result<Vec<u32>> {
        if max_len == 0 {
            return Err(ModelError::BadMaxLen);
        }
        let prefix = if images.is_empty() {
            None
        } else {
            Some(self.image_prefix(images, 1)?.detach())
        };
        let mut ids = Tokenizer.prompt(instruction);
        let mut out = Vec::new();
        let dev = self.params().device().clone();
        while out.len() < max_len {
            let input = Tensor::from_vec(ids.clone(), (1, ids.len()), &dev)?;
            let logits = self.decode_logits(prefix.as_ref(), &input)?.detach();
            let last = logits
                .narrow(1, logits.dim(1)? - 1, 1)?
                .flatten_all()?
                .to_dtype(DType::F32)?
                .to_vec1::<f32>()?;
            let next = argmax_first(&last) as u32;
            if next == Tokenizer::EOS {
                break;
            }
            ids.push(next);
            out.push(next);
        }
        Ok(out)
    }

    pub fn generate(&self, images: &[&[f32]], instruction: &str, max_len: usize) -> Result<String> {
        Ok(Tokenizer.decode(&self.generate_ids(images, instruction, max_len)?))
    }

    /// Summed log-probability of `response` followed by EOS, given the
    /// images and instruction.
    pub fn score_response(&self, images: &[&[f32]], instruction: &str, response: &str) -> Result<f64> {
        let (ids, start) = Tokenizer.instruct(instruction, response);
        let prefix = if images.is_empty() {
            None
        } else {
            Some(self.image_prefix(images, 1)?.detach())
        };
        let p = prefix.as_ref().map_or(Ok(0), |x| x.dim(1))?;
        let input = Tensor::from_vec(ids.clone(), (1, ids.len()), self.params().device())?;
        let logits = self.decode_logits(prefix.as_ref(), &input)?.detach();
        let logp = crate::layers::log_softmax(&logits)?
            .squeeze(0)?
            .to_dtype(DType::F64)?
            .to_vec2::<f64>()?;
        Ok((start..ids.len()).map(|j| logp[p + j - 1][ids[j] as usize]).sum())
    }
}

fn argmax_first(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Runs a model over benchmark items, loading images from a store.
pub struct ModelGenerator {
    name: String,
    model: Model,
    images: ImageStore,
    max_len: usize,
}

impl ModelGenerator {
    pub fn new(name: impl Into<String>, model: Model, images: ImageStore, max_len: usize) -> Self {
        Self {
            name: name.into(),
            model,
            images,
            max_len,
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }
}

impl Generator for ModelGenerator {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, images: &[String], instruction: &str) -> std::result::Result<String, GeneratorError> {
        let px = images
            .iter()
            .map(|id| self.images.load(id))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f32]> = px.iter().map(|p| p.as_slice()).collect();
        Ok(self.model.generate(&refs, instruction, self.max_len)?)
    }
}
