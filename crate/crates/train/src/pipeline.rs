//! Turning compiled triplets into per-stage data, and running all four
//! stages back to back.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use candle_core::DType;
use cxr_core::corpus::{Split, Triplet};
use cxr_model::{Checkpoint, CheckpointMeta, ImageStore, Model, ModelConfig, SeqExample};
use serde::{Deserialize, Serialize};

use crate::config::StageConfig;
use crate::data::{ImageText, StageData};
use crate::log::TrainLog;
use crate::retrieval::{retrieval_top1, RetrievalResult};
use crate::run::run_stage;
use crate::stage::Stage;
use crate::Result;

const FINDINGS: &str = "findings_generation";
const SUMMARY: &str = "findings_summarization";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageDataOptions {
    /// Task ids used for instruction tuning; empty means every task.
    pub instruct_tasks: BTreeSet<String>,
    /// Cap on alignment examples (taken in corpus order).
    pub align_limit: Option<usize>,
    /// Keep one copy of each distinct document for text-only pretraining.
    pub dedupe_documents: bool,
}

impl Default for StageDataOptions {
    fn default() -> Self {
        Self {
            instruct_tasks: BTreeSet::new(),
            align_limit: None,
            dedupe_documents: false,
        }
    }
}

/// Builds one stage's data from the triplets of `split`. Sequences that
/// would not fit the decoder context are dropped; the count is returned.
pub fn build_stage_data(
    stage: Stage,
    triplets: &[Triplet],
    split: Split,
    images: &ImageStore,
    cfg: &ModelConfig,
    opts: &StageDataOptions,
) -> Result<(StageData, usize)> {
    let rows = triplets.iter().filter(|t| t.split == split);
    let load = |id: &String| images.load(id);
    let fits = |ex: &SeqExample| ex.images.len() * cfg.vision.num_patches() + ex.ids.len() <= cfg.decoder.max_seq;
    Ok(match stage {
        Stage::LmPretrain => {
            let mut seen = BTreeSet::new();
            let docs: Vec<String> = rows
                .filter(|t| t.task_id == FINDINGS || t.task_id == SUMMARY)
                .filter(|t| !opts.dedupe_documents || seen.insert(t.response.as_str()))
                .map(|t| t.response.clone())
                .collect();
            (StageData::Documents(docs), 0)
        }
        Stage::Contrastive => {
            let mut pairs = Vec::new();
            for t in rows.filter(|t| t.task_id == FINDINGS && t.images.len() == 1) {
                pairs.push(ImageText {
                    image: load(&t.images[0])?,
                    text: t.response.clone(),
                });
            }
            (StageData::Pairs(pairs), 0)
        }
        Stage::Align | Stage::Instruct => {
            let selected: Vec<&Triplet> = if stage == Stage::Align {
                rows.filter(|t| t.task_id == FINDINGS)
                    .take(opts.align_limit.unwrap_or(usize::MAX))
                    .collect()
            } else {
                rows.filter(|t| opts.instruct_tasks.is_empty() || opts.instruct_tasks.contains(&t.task_id))
                    .collect()
            };
            let mut seqs = Vec::new();
            let mut dropped = 0;
            for t in selected {
                let imgs = t.images.iter().map(load).collect::<std::result::Result<Vec<_>, _>>()?;
                let ex = SeqExample::instruct(imgs, &t.instruction, &t.response);
                if fits(&ex) {
                    seqs.push(ex);
                } else {
                    dropped += 1;
                }
            }
            (StageData::Sequences(seqs), dropped)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub model: ModelConfig,
    pub model_seed: u64,
    pub stages: Vec<StageConfig>,
    #[serde(default)]
    pub data: StageDataOptions,
    /// Candidate pool size for the post-contrastive retrieval check.
    pub retrieval_pool: usize,
}

impl PipelineConfig {
    /// Reference defaults for every stage, with each peak learning rate
    /// multiplied by `lr_scale` (ratios between stages are kept).
    pub fn with_lr_scale(model: ModelConfig, seed: u64, lr_scale: f64) -> Self {
        let stages = Stage::ALL
            .iter()
            .map(|&s| {
                let mut c = StageConfig::defaults(s);
                c.peak_lr *= lr_scale;
                c.seed = seed;
                c
            })
            .collect();
        Self {
            model,
            model_seed: seed,
            stages,
            data: StageDataOptions::default(),
            retrieval_pool: 64,
        }
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageConfig> {
        self.stages.iter().find(|c| c.stage == stage)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub checkpoints: BTreeMap<String, PathBuf>,
    pub logs: BTreeMap<String, TrainLog>,
    pub dropped: BTreeMap<String, usize>,
    pub retrieval: Option<RetrievalResult>,
    pub wall_s: f64,
}

/// Runs every configured stage in order, writing `{stage}.ckpt` and
/// `{stage}.log.jsonl` into `out_dir`. Validation-split data supplies the
/// per-epoch eval loss; retrieval is measured on the test split after the
/// contrastive stage.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    triplets: &[Triplet],
    images: &ImageStore,
    out_dir: &Path,
) -> Result<PipelineOutcome> {
    let started = std::time::Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let model = Model::new(cfg.model.clone(), cfg.model_seed, DType::F32)?;
    let mut ckpt = Checkpoint::new(
        model,
        CheckpointMeta {
            lineage: Vec::new(),
            rng: None,
            extra: BTreeMap::new(),
        },
    );
    let mut out = PipelineOutcome {
        checkpoints: BTreeMap::new(),
        logs: BTreeMap::new(),
        dropped: BTreeMap::new(),
        retrieval: None,
        wall_s: 0.0,
    };
    for stage_cfg in &cfg.stages {
        let stage = stage_cfg.stage;
        let (train, dropped) = build_stage_data(stage, triplets, Split::Train, images, &cfg.model, &cfg.data)?;
        let (eval, _) = build_stage_data(stage, triplets, Split::Val, images, &cfg.model, &cfg.data)?;
        tracing::info!(%stage, train = train.len(), eval = eval.len(), dropped, "stage start");
        let eval = (!eval.is_empty()).then_some(eval);
        let (next, log) = run_stage(stage_cfg, &train, eval.as_ref(), ckpt)?;
        ckpt = next;
        let path = out_dir.join(format!("{stage}.ckpt"));
        ckpt.save(&path)?;
        log.write_jsonl(&out_dir.join(format!("{stage}.log.jsonl")))?;
        if stage == Stage::Contrastive {
            let (test, _) = build_stage_data(stage, triplets, Split::Test, images, &cfg.model, &cfg.data)?;
            if let StageData::Pairs(pairs) = &test {
                if !pairs.is_empty() {
                    let r = retrieval_top1(&ckpt.model, pairs, cfg.retrieval_pool, stage_cfg.seed)?;
                    tracing::info!(top1 = r.top1, chance = r.chance, "retrieval");
                    out.retrieval = Some(r);
                }
            }
        }
        out.checkpoints.insert(stage.name().to_string(), path);
        out.dropped.insert(stage.name().to_string(), dropped);
        out.logs.insert(stage.name().to_string(), log);
    }
    out.wall_s = started.elapsed().as_secs_f64();
    Ok(out)
}
