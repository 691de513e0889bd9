//! The training loop for a single stage.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use candle_core::Tensor;
use cxr_model::{Checkpoint, CheckpointMeta, Model, RngState, SeqExample, Tokenizer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::StageConfig;
use crate::data::StageData;
use crate::log::{EpochRecord, StepRecord, TrainLog};
use crate::optim::{clip_grad_norm, AdamW};
use crate::schedule::lr_schedule;
use crate::{Result, TrainError};

/// Fails unless `init` was last trained by the stage preceding `cfg.stage`.
pub fn check_order(cfg: &StageConfig, init: &Checkpoint) -> Result<()> {
    let found = init.last_stage();
    let expected = cfg.stage.predecessor().map(|s| s.name());
    if found != expected {
        return Err(TrainError::StageOrder {
            stage: cfg.stage,
            expected: expected.unwrap_or("a fresh model").to_string(),
            found: found.unwrap_or("a fresh model").to_string(),
        });
    }
    Ok(())
}

/// Loss of one micro-batch under the model's current trainable set.
fn batch_loss(model: &Model, data: &StageData, idx: &[usize]) -> Result<Tensor> {
    Ok(match data {
        StageData::Documents(docs) => {
            let max = model.config().decoder.max_seq;
            let batch: Vec<SeqExample> = idx
                .iter()
                .map(|&i| {
                    let mut ex = SeqExample::document(&docs[i]);
                    ex.ids.truncate(max);
                    ex
                })
                .collect();
            model.sequence_loss(&batch)?
        }
        StageData::Pairs(pairs) => {
            let imgs: Vec<&[f32]> = idx.iter().map(|&i| pairs[i].image.as_slice()).collect();
            let texts: Vec<Vec<u32>> = idx.iter().map(|&i| Tokenizer.encode(&pairs[i].text)).collect();
            model.contrastive_loss(&imgs, &texts)?
        }
        StageData::Sequences(seqs) => {
            let batch: Vec<SeqExample> = idx.iter().map(|&i| seqs[i].clone()).collect();
            model.sequence_loss(&batch)?
        }
    })
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?)
}

/// Mean batch loss with every component frozen.
pub fn eval_loss(model: &mut Model, data: &StageData, batch: usize) -> Result<f64> {
    let saved = model.params().trainable().clone();
    model.set_trainable(&BTreeSet::new());
    let batches = data.batches(batch, &mut ChaCha8Rng::seed_from_u64(0));
    let mut total = 0.0;
    for b in &batches {
        total += scalar(&batch_loss(model, data, b)?)?;
    }
    model.set_trainable(&saved);
    Ok(total / batches.len().max(1) as f64)
}

/// Trains one stage starting from `init`, which must be the previous
/// stage's checkpoint (or a fresh model for the first stage).
pub fn run_stage(
    cfg: &StageConfig,
    train: &StageData,
    eval: Option<&StageData>,
    init: Checkpoint,
) -> Result<(Checkpoint, TrainLog)> {
    cfg.validate()?;
    check_order(cfg, &init)?;
    train.check_for(cfg.stage)?;
    if let Some(e) = eval {
        e.check_for(cfg.stage)?;
    }
    let Checkpoint { mut model, meta } = init;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let steps_per_epoch = train.num_batches(cfg.batch).div_ceil(cfg.grad_accum);
    let total = steps_per_epoch * cfg.epochs;
    let mut log = TrainLog::new(cfg.stage, total);
    let mut opt = AdamW::new(cfg.betas, cfg.eps, cfg.weight_decay);
    let started = Instant::now();
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let epoch_start = Instant::now();
        let trainable = cfg.trainable(epoch)?;
        model.set_trainable(&trainable);
        let batches = train.batches(cfg.batch, &mut rng);
        let mut loss_sum = 0.0;
        for chunk in batches.chunks(cfg.grad_accum) {
            step += 1;
            let mut grads: BTreeMap<String, Tensor> = BTreeMap::new();
            let mut chunk_loss = 0.0;
            for idx in chunk {
                let loss = batch_loss(&model, train, idx)?;
                chunk_loss += scalar(&loss)?;
                let store = loss.backward()?;
                for (name, var) in model.params().trainable_vars() {
                    if let Some(g) = store.get(var.as_tensor()) {
                        let g = g.detach();
                        let acc = match grads.remove(name) {
                            Some(prev) => (prev + g)?,
                            None => g,
                        };
                        grads.insert(name.to_string(), acc);
                    }
                }
            }
            let n = chunk.len() as f64;
            for g in grads.values_mut() {
                *g = (&*g / n)?;
            }
            let (pre, post) = clip_grad_norm(&mut grads, cfg.grad_clip)?;
            let lr = lr_schedule(step, total, cfg.warmup_ratio, cfg.peak_lr)?;
            opt.step(model.params(), &grads, lr)?;
            let loss = chunk_loss / n;
            loss_sum += loss;
            log.steps.push(StepRecord {
                epoch,
                step,
                lr,
                loss,
                grad_norm: post,
                grad_norm_pre_clip: pre,
            });
        }
        let train_loss = loss_sum / steps_per_epoch as f64;
        let eval_loss = match eval {
            Some(e) => Some(eval_loss(&mut model, e, cfg.batch)?),
            None => None,
        };
        tracing::info!(
            stage = %cfg.stage,
            epoch,
            train_loss,
            eval_loss,
            secs = epoch_start.elapsed().as_secs_f64(),
            "epoch done"
        );
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            eval_loss,
            trainable: trainable.iter().map(|c| c.name().to_string()).collect(),
            wall_s: epoch_start.elapsed().as_secs_f64(),
        });
    }
    log.wall_s = started.elapsed().as_secs_f64();
    model.set_trainable(&BTreeSet::new());

    let mut lineage = meta.lineage;
    lineage.push(cfg.stage.name().to_string());
    let mut extra = BTreeMap::new();
    extra.insert("stage_config".to_string(), serde_json::to_value(cfg)?);
    extra.insert(
        "final_train_loss".to_string(),
        serde_json::json!(log.last_epoch_loss()),
    );
    let meta = CheckpointMeta {
        lineage,
        rng: Some(RngState::capture(&rng)),
        extra,
    };
    Ok((Checkpoint::new(model, meta), log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stage::Stage;
    use candle_core::DType;
    use cxr_model::ModelConfig;

    fn fresh() -> Checkpoint {
        let model = Model::new(ModelConfig::tiny(), 0, DType::F32).unwrap();
        Checkpoint::new(
            model,
            CheckpointMeta {
                lineage: vec![],
                rng: None,
                extra: BTreeMap::new(),
            },
        )
    }

    #[test]
    fn stage_order_enforced() {
        let cfg = StageConfig::defaults(Stage::Instruct);
        let data = StageData::Sequences(vec![SeqExample::instruct(vec![], "q", "a")]);
        let err = run_stage(&cfg, &data, None, fresh()).err().unwrap();
        assert!(matches!(err, TrainError::StageOrder { .. }), "{err}");
        assert!(err.to_string().contains("stage-order violation"));
    }

    #[test]
    fn tiny_lm_pretrain_logs_schedule_and_lineage() {
        let mut cfg = StageConfig::defaults(Stage::LmPretrain);
        cfg.batch = 2;
        cfg.epochs = 2;
        cfg.peak_lr = 1e-2;
        let docs = StageData::Documents(vec!["ab".into(), "cd".into(), "ef".into()]);
        let (ckpt, log) = run_stage(&cfg, &docs, Some(&docs), fresh()).unwrap();
        assert_eq!(ckpt.meta.lineage, vec!["lm_pretrain"]);
        assert_eq!(log.total_steps, 4);
        for (i, s) in log.steps.iter().enumerate() {
            assert_eq!(s.step, i + 1);
            assert_eq!(s.lr, lr_schedule(s.step, 4, 0.05, 1e-2).unwrap());
            assert!(s.grad_norm <= 1.0);
        }
        assert_eq!(log.epochs.len(), 2);
        assert!(log.epochs[0].eval_loss.is_some());
    }
}
