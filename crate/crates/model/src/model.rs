//! The assembled model and its training-sequence layout.

use std::sync::Arc;

use candle_core::{DType, Device, Tensor, D};

use crate::config::ModelConfig;
use crate::layers::{
    add_block, add_layer_norm, add_linear, block, causal_mask, l2_normalize, layer_norm, linear,
    NEG_INF,
};
use crate::loss::{lm_loss, siglip_loss};
use crate::params::{Component, Init, ParamStore};
use crate::tokenizer::Tokenizer;
use crate::{ModelError, Result};

/// One decoder training sequence: image tokens first, then `ids`.
///
/// Predictions of `ids[loss_from..]` contribute to the loss.
#[derive(Debug, Clone)]
pub struct SeqExample {
    pub images: Vec<Arc<Vec<f32>>>,
    pub ids: Vec<u32>,
    pub loss_from: usize,
}

impl SeqExample {
    pub fn instruct(images: Vec<Arc<Vec<f32>>>, instruction: &str, response: &str) -> Self {
        let (ids, loss_from) = Tokenizer.instruct(instruction, response);
        Self {
            images,
            ids,
            loss_from,
        }
    }

    pub fn document(text: &str) -> Self {
        Self {
            images: Vec::new(),
            ids: Tokenizer.document(text),
            loss_from: 1,
        }
    }
}

pub struct Model {
    cfg: ModelConfig,
    params: ParamStore,
}

impl Model {
    /// Fresh weights drawn from a seeded generator.
    pub fn new(cfg: ModelConfig, seed: u64, dtype: DType) -> Result<Self> {
        cfg.validate()?;
        let mut p = ParamStore::new(dtype, Device::Cpu);
        let mut init = Init::new(seed);
        let v = &cfg.vision;
        let patch_px = v.patch_size * v.patch_size;
        add_linear(&mut p, &mut init, "vision.patch_embed", patch_px, v.dim)?;
        p.insert("vision.pos", &[v.num_patches(), v.dim], init.normal(v.num_patches() * v.dim, 0.02))?;
        for i in 0..v.layers {
            add_block(&mut p, &mut init, &format!("vision.blocks.{i}"), v.dim)?;
        }
        add_layer_norm(&mut p, "vision.ln_f", v.dim)?;
        add_linear(&mut p, &mut init, "vision.embed", v.dim, cfg.embed_dim)?;

        let t = &cfg.text_tower;
        let std = (t.dim as f64).sqrt().recip();
        p.insert("text_tower.tok", &[t.vocab, t.dim], init.normal(t.vocab * t.dim, std))?;
        p.insert("text_tower.pos", &[t.max_len, t.dim], init.normal(t.max_len * t.dim, 0.02))?;
        for i in 0..t.layers {
            add_block(&mut p, &mut init, &format!("text_tower.blocks.{i}"), t.dim)?;
        }
        add_layer_norm(&mut p, "text_tower.ln_f", t.dim)?;
        add_linear(&mut p, &mut init, "text_tower.embed", t.dim, cfg.embed_dim)?;

        let pr = &cfg.projector;
        add_linear(&mut p, &mut init, "projector.fc1", pr.in_dim, pr.hidden_dim)?;
        add_linear(&mut p, &mut init, "projector.fc2", pr.hidden_dim, pr.out_dim)?;

        let d = &cfg.decoder;
        let std = (d.dim as f64).sqrt().recip();
        p.insert("decoder.tok", &[d.vocab, d.dim], init.normal(d.vocab * d.dim, std))?;
        p.insert("decoder.pos", &[d.max_seq, d.dim], init.normal(d.max_seq * d.dim, 0.02))?;
        for i in 0..d.layers {
            add_block(&mut p, &mut init, &format!("decoder.blocks.{i}"), d.dim)?;
        }
        add_layer_norm(&mut p, "decoder.ln_f", d.dim)?;
        add_linear(&mut p, &mut init, "decoder.lm_head", d.dim, d.vocab)?;

        p.insert("head.log_temperature", &[1], vec![10f64.ln()])?;
        p.insert("head.bias", &[1], vec![-10.0])?;
        Ok(Self { cfg, params: p })
    }

    /// Wraps an existing parameter store, checking it matches a fresh model
    /// of the same config name for name and shape.
    pub fn from_params(cfg: ModelConfig, params: ParamStore) -> Result<Self> {
        let reference = Model::new(cfg.clone(), 0, params.dtype())?;
        let names: Vec<&str> = reference.params.names().collect();
        let got: Vec<&str> = params.names().collect();
        if names != got {
            return Err(ModelError::Checkpoint("parameter names do not match the config".into()));
        }
        for (name, var) in reference.params.iter() {
            let other = params.var(name).expect("names checked");
            if var.dims() != other.dims() {
                return Err(ModelError::Checkpoint(format!("shape mismatch for {name}")));
            }
        }
        Ok(Self { cfg, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn set_trainable(&mut self, components: &std::collections::BTreeSet<Component>) {
        self.params.set_trainable(components);
    }

    /// Moves the vision tower to a new patch grid (and so a new input
    /// resolution), resampling its positional embedding.
    pub fn resize_vision_grid(&mut self, grid: (usize, usize)) -> Result<()> {
        let old = self.cfg.vision.grid;
        let dim = self.cfg.vision.dim;
        let table = self.params.values_f32("vision.pos")?;
        let resized = crate::pos::resize_pos_embed(&table, old, dim, grid)?;
        let mut cfg = self.cfg.clone();
        cfg.vision.grid = grid;
        cfg.validate()?;
        self.params.insert(
            "vision.pos",
            &[grid.0 * grid.1, dim],
            resized.into_iter().map(f64::from).collect(),
        )?;
        self.cfg = cfg;
        Ok(())
    }

    fn device(&self) -> &Device {
        self.params.device()
    }

    /// Stacks raw pixel buffers (values in [0, 1]) into a `(B, H, W)` tensor.
    pub fn pixels(&self, images: &[&[f32]]) -> Result<Tensor> {
        let (h, w) = self.cfg.vision.image_size();
        let mut flat = Vec::with_capacity(images.len() * h * w);
        for img in images {
            if img.len() != h * w {
                let side = (img.len() as f64).sqrt() as usize;
                return Err(ModelError::Resolution {
                    expected: (h, w),
                    got: (side, img.len() / side.max(1)),
                });
            }
            flat.extend_from_slice(img);
        }
        Ok(Tensor::from_vec(flat, (images.len(), h, w), self.device())?.to_dtype(self.params.dtype())?)
    }

    /// Patch features `(B, grid_h * grid_w, vision.dim)` for pixels `(B, H, W)`.
    pub fn encode_image(&self, pixels: &Tensor) -> Result<Tensor> {
        let v = &self.cfg.vision;
        let (b, h, w) = pixels.dims3()?;
        if (h, w) != v.image_size() {
            return Err(ModelError::Resolution {
                expected: v.image_size(),
                got: (h, w),
            });
        }
        let ps = v.patch_size;
        let (gh, gw) = v.grid;
        let patches = pixels
            .affine(2.0, -1.0)?
            .reshape((b, gh, ps, gw, ps))?
            .permute((0, 1, 3, 2, 4))?
            .contiguous()?
            .reshape((b, gh * gw, ps * ps))?;
        let mut x = linear(&self.params, "vision.patch_embed", &patches)?
            .broadcast_add(&self.params.get("vision.pos")?)?;
        for i in 0..v.layers {
            x = block(&self.params, &format!("vision.blocks.{i}"), &x, v.heads, None)?;
        }
        layer_norm(&self.params, "vision.ln_f", &x)
    }

    /// Unit-norm pooled image embeddings `(B, embed_dim)`.
    pub fn image_embedding(&self, features: &Tensor) -> Result<Tensor> {
        let pooled = features.mean(1)?;
        l2_normalize(&linear(&self.params, "vision.embed", &pooled)?)
    }

    /// Unit-norm text embeddings `(B, embed_dim)`; texts longer than the
    /// tower's `max_len` are truncated.
    pub fn text_embedding(&self, texts: &[Vec<u32>]) -> Result<Tensor> {
        if texts.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let t = &self.cfg.text_tower;
        let len = texts.iter().map(|x| x.len().clamp(1, t.max_len)).max().unwrap_or(1);
        let b = texts.len();
        let mut ids = Vec::with_capacity(b * len);
        let mut valid = Vec::with_capacity(b * len);
        for text in texts {
            for i in 0..len {
                let real = i < text.len().min(t.max_len) || (i == 0 && text.is_empty());
                ids.push(if real && !text.is_empty() { text[i] } else { Tokenizer::PAD });
                valid.push(if real { 1.0 } else { 0.0 });
            }
        }
        let dev = self.device();
        let dtype = self.params.dtype();
        let ids = Tensor::from_vec(ids, (b, len), dev)?;
        let valid = Tensor::from_vec(valid, (b, len), dev)?.to_dtype(dtype)?;
        let key_mask = valid
            .affine(-NEG_INF, NEG_INF)?
            .reshape((b, 1, 1, len))?;
        let emb = self
            .params
            .get("text_tower.tok")?
            .index_select(&ids.flatten_all()?, 0)?
            .reshape((b, len, t.dim))?;
        let pos = self.params.get("text_tower.pos")?.narrow(0, 0, len)?;
        let mut x = emb.broadcast_add(&pos)?;
        for i in 0..t.layers {
            x = block(&self.params, &format!("text_tower.blocks.{i}"), &x, t.heads, Some(&key_mask))?;
        }
        let x = layer_norm(&self.params, "text_tower.ln_f", &x)?;
        let weights = valid.unsqueeze(2)?;
        let pooled = x
            .broadcast_mul(&weights)?
            .sum(1)?
            .broadcast_div(&weights.sum(1)?)?;
        l2_normalize(&linear(&self.params, "text_tower.embed", &pooled)?)
    }

    /// Maps patch features into the decoder's embedding space.
    pub fn project(&self, features: &Tensor) -> Result<Tensor> {
        let got = features.dim(D::Minus1)?;
        if got != self.cfg.projector.in_dim {
            return Err(ModelError::Config(format!(
                "projector expects {} features, got {got}",
                self.cfg.projector.in_dim
            )));
        }
        let h = linear(&self.params, "projector.fc1", features)?.gelu_erf()?;
        linear(&self.params, "projector.fc2", &h)
    }

    /// Projected image tokens `(B, n_images * patches, decoder.dim)` for a
    /// batch whose members each carry `n_images` images.
    pub fn image_prefix(&self, images: &[&[f32]], batch: usize) -> Result<Tensor> {
        let pixels = self.pixels(images)?;
        let tokens = self.project(&self.encode_image(&pixels)?)?;
        let per = images.len() / batch;
        let n = self.cfg.vision.num_patches();
        Ok(tokens.reshape((batch, per * n, self.cfg.decoder.dim))?)
    }

    /// Decoder logits `(B, P + T, vocab)` for an optional image prefix
    /// `(B, P, dim)` followed by token ids `(B, T)`.
    pub fn decode_logits(&self, prefix: Option<&Tensor>, ids: &Tensor) -> Result<Tensor> {
        let d = &self.cfg.decoder;
        let (b, t) = ids.dims2()?;
        let emb = self
            .params
            .get("decoder.tok")?
            .index_select(&ids.flatten_all()?, 0)?
            .reshape((b, t, d.dim))?;
        let x = match prefix {
            Some(p) => Tensor::cat(&[p, &emb], 1)?,
            None => emb,
        };
        let len = x.dim(1)?;
        if len > d.max_seq {
            return Err(ModelError::SeqTooLong { len, max: d.max_seq });
        }
        let mut x = x.broadcast_add(&self.params.get("decoder.pos")?.narrow(0, 0, len)?)?;
        let mask = causal_mask(len, self.params.dtype(), self.device())?;
        for i in 0..d.layers {
            x = block(&self.params, &format!("decoder.blocks.{i}"), &x, d.heads, Some(&mask))?;
        }
        let x = layer_norm(&self.params, "decoder.ln_f", &x)?;
        linear(&self.params, "decoder.lm_head", &x)
    }

    /// Contrastive loss over matched image/text pairs.
    pub fn contrastive_loss(&self, images: &[&[f32]], texts: &[Vec<u32>]) -> Result<Tensor> {
        let img = self.image_embedding(&self.encode_image(&self.pixels(images)?)?)?;
        let txt = self.text_embedding(texts)?;
        siglip_loss(
            &img,
            &txt,
            &self.params.get("head.log_temperature")?,
            &self.params.get("head.bias")?,
        )
    }

    /// Mean next-token cross-entropy over the masked positions of a batch.
    /// Every example must carry the same number of images.
    pub fn sequence_loss(&self, batch: &[SeqExample]) -> Result<Tensor> {
        let first = batch.first().ok_or(ModelError::EmptyBatch)?;
        let n_img = first.images.len();
        if batch.iter().any(|e| e.images.len() != n_img) {
            return Err(ModelError::Config("batch mixes image counts".into()));
        }
        let b = batch.len();
        let t = batch.iter().map(|e| e.ids.len()).max().unwrap_or(0);
        if t < 2 {
            return Err(ModelError::EmptyMask);
        }
        let prefix = if n_img > 0 {
            let imgs: Vec<&[f32]> = batch
                .iter()
                .flat_map(|e| e.images.iter().map(|i| i.as_slice()))
                .collect();
            Some(self.image_prefix(&imgs, b)?)
        } else {
            None
        };
        let p = prefix.as_ref().map_or(Ok(0), |x| x.dim(1))?;
        let mut ids = Vec::with_capacity(b * t);
        let mut targets = Vec::with_capacity(b * (t - 1));
        let mut mask = Vec::with_capacity(b * (t - 1));
        for e in batch {
            for i in 0..t {
                ids.push(e.ids.get(i).copied().unwrap_or(Tokenizer::PAD));
            }
            for i in 0..t - 1 {
                let j = i + 1;
                targets.push(e.ids.get(j).copied().unwrap_or(Tokenizer::PAD));
                mask.push(if j >= e.loss_from.max(1) && j < e.ids.len() { 1.0f32 } else { 0.0 });
            }
        }
        let dev = self.device();
        let ids = Tensor::from_vec(ids, (b, t), dev)?;
        let targets = Tensor::from_vec(targets, (b, t - 1), dev)?;
        let mask = Tensor::from_vec(mask, (b, t - 1), dev)?.to_dtype(self.params.dtype())?;
        let logits = self.decode_logits(prefix.as_ref(), &ids)?;
        lm_loss(&logits.narrow(1, p, t - 1)?, &targets, &mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Model {
        Model::new(ModelConfig::tiny(), 1, DType::F64).unwrap()
    }

    fn image(seed: u32) -> Vec<f32> {
        (0..64).map(|i| ((i * 7 + seed * 13) % 17) as f32 / 17.0).collect()
    }

    #[test]
    fn patch_feature_shape() {
        let m = Model::new(ModelConfig::default(), 0, DType::F32).unwrap();
        let img = vec![0.5f32; 64 * 64];
        let f = m.encode_image(&m.pixels(&[&img]).unwrap()).unwrap();
        assert_eq!(f.dims(), &[1, 16, 64]);
        let wrong = vec![0.5f32; 32 * 32];
        assert!(matches!(m.pixels(&[&wrong]), Err(ModelError::Resolution { .. })));
        let t = Tensor::zeros((1, 32, 32), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(m.encode_image(&t), Err(ModelError::Resolution { .. })));
    }

    #[test]
    fn identical_images_identical_features() {
        let m = tiny();
        let a = image(1);
        let f = m.encode_image(&m.pixels(&[&a, &a]).unwrap()).unwrap().to_vec3::<f64>().unwrap();
        assert_eq!(f[0], f[1]);
    }

    #[test]
    fn swapping_patches_changes_more_than_order() {
        let m = tiny();
        let a = image(2);
        // Swap the top-left and top-right 4x4 patches of the 8x8 image.
        let mut b = a.clone();
        for y in 0..4 {
            for x in 0..4 {
                b.swap(y * 8 + x, y * 8 + x + 4);
            }
        }
        let f = m.encode_image(&m.pixels(&[&a, &b]).unwrap()).unwrap().to_vec3::<f64>().unwrap();
        let mut swapped = f[0].clone();
        swapped.swap(0, 1);
        let diff: f64 = swapped
            .iter()
            .flatten()
            .zip(f[1].iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(diff > 1e-6, "positional embedding had no effect");
    }

    #[test]
    fn projector_preserves_length_and_zero_second_layer_gives_zero() {
        let m = tiny();
        let feats = Tensor::ones((1, 4, 8), DType::F64, &Device::Cpu).unwrap();
        assert_eq!(m.project(&feats).unwrap().dims(), &[1, 4, 8]);
        let zeros = Tensor::zeros((8, 8), DType::F64, &Device::Cpu).unwrap();
        m.params().set_values("projector.fc2.weight", &zeros).unwrap();
        let out = m.project(&feats).unwrap().abs().unwrap().sum_all().unwrap().to_scalar::<f64>().unwrap();
        assert_eq!(out, 0.0);
        let bad = Tensor::ones((1, 4, 5), DType::F64, &Device::Cpu).unwrap();
        assert!(m.project(&bad).is_err());
    }

    #[test]
    fn text_embeddings_ignore_padding() {
        let m = tiny();
        let a = Tokenizer.encode("no pneumothorax");
        let longer = Tokenizer.encode("there is a large right pleural effusion");
        let solo = m.text_embedding(std::slice::from_ref(&a)).unwrap().to_vec2::<f64>().unwrap();
        let batched = m.text_embedding(&[a, longer]).unwrap().to_vec2::<f64>().unwrap();
        for (x, y) in solo[0].iter().zip(&batched[0]) {
            assert!((x - y).abs() < 1e-9);
        }
        let norm: f64 = batched[1].iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn too_long_sequences_error() {
        let m = tiny();
        let ids = Tensor::zeros((1, 60), DType::U32, &Device::Cpu).unwrap();
        assert!(matches!(m.decode_logits(None, &ids), Err(ModelError::SeqTooLong { .. })));
    }

    #[test]
    fn batched_loss_matches_single() {
        let m = tiny();
        let img = Arc::new(image(3));
        let a = SeqExample::instruct(vec![img.clone()], "Q?", "Yes");
        let b = SeqExample::instruct(vec![img], "Longer question?", "No");
        let la = m.sequence_loss(std::slice::from_ref(&a)).unwrap().to_scalar::<f64>().unwrap();
        let lb = m.sequence_loss(std::slice::from_ref(&b)).unwrap().to_scalar::<f64>().unwrap();
        let both = m.sequence_loss(&[a, b]).unwrap().to_scalar::<f64>().unwrap();
        // Masked positions: 4 for "Yes"+EOS, 3 for "No"+EOS.
        assert!((both - (4.0 * la + 3.0 * lb) / 7.0).abs() < 1e-10);
    }
}
