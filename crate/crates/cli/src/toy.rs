//! The end-to-end toy run: synthesize a corpus, compile it, train all four
//! stages on CPU, then score binary disease questions and post-contrastive
//! retrieval.

use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use cxr_core::bench::{EvalResult, EvalTask};
use cxr_core::corpus::synth::{synth_generate, write_synth, SynthConfig};
use cxr_model::ModelConfig;
use cxr_train::{run_pipeline, PipelineConfig, PipelineOutcome, Stage};
use serde::{Deserialize, Serialize};

use crate::dataset::{compile, load_source, write_dataset, CompileConfig, Dataset};
use crate::evaluate::{run_bench, BenchConfig, BenchModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    pub synth: SynthConfig,
    pub compile: CompileConfig,
    pub pipeline: PipelineConfig,
    pub bench: BenchConfig,
}

impl Default for ToyConfig {
    fn default() -> Self {
        let seed = 0;
        let mut pipeline = PipelineConfig::with_lr_scale(ModelConfig::default(), seed, 10.0);
        pipeline.data.instruct_tasks = ["disease_binary".to_string()].into_iter().collect();
        pipeline.data.align_limit = Some(800);
        pipeline.data.dedupe_documents = true;
        for s in &mut pipeline.stages {
            if s.stage == Stage::Contrastive {
                s.epochs = 40;
                s.warmup_ratio = 0.15;
            }
        }
        Self {
            synth: SynthConfig {
                seed,
                ..Default::default()
            },
            compile: CompileConfig {
                tasks: [
                    ("disease_binary".to_string(), 2),
                    ("findings_generation".to_string(), 1),
                    ("findings_summarization".to_string(), 1),
                ]
                .into_iter()
                .collect(),
                seed,
                ..Default::default()
            },
            pipeline,
            bench: BenchConfig {
                seed,
                max_len: 8,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyOutcome {
    pub pipeline: PipelineOutcome,
    pub binary: EvalResult,
    pub wall_s: f64,
}

/// Runs everything under `dir`: `synth/`, `data/`, `ckpt/` and `bench/`.
pub fn run_toy(cfg: &ToyConfig, dir: &Path) -> Result<ToyOutcome> {
    let started = Instant::now();
    let synth_dir = dir.join("synth");
    write_synth(&synth_dir, &synth_generate(&cfg.synth)?)?;
    let (records, _) = load_source(&synth_dir, &cfg.compile.qc)?;
    let (samples, logs) = compile(&records, &cfg.compile)?;
    write_dataset(&dir.join("data"), &records, &samples, &logs)?;
    let data = Dataset { records, samples };
    let store = data.image_store(cfg.pipeline.model.vision.image_size());
    let pipeline = run_pipeline(&cfg.pipeline, &data.triplets(), &store, &dir.join("ckpt"))?;
    let ckpt = pipeline.checkpoints[Stage::Instruct.name()].clone();
    let mut results = run_bench(&[EvalTask::DiseaseBinary], &BenchModel::Checkpoint(ckpt), &data, &cfg.bench)?;
    crate::evaluate::write_results(&results, &dir.join("bench"))?;
    Ok(ToyOutcome {
        pipeline,
        binary: results.remove(0),
        wall_s: started.elapsed().as_secs_f64(),
    })
}
