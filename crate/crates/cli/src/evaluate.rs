//! Benchmark runs over a compiled dataset.

use std::path::Path;

use anyhow::{bail, Result};
use candle_core::DType;
use cxr_core::bench::{build_eval_set, run_task, write_report, EvalItem, EvalResult, EvalTask, Generator, Oracle, RunConfig};
use cxr_core::corpus::{CompiledSample, Split};
use cxr_model::{Checkpoint, ModelGenerator};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub seed: u64,
    pub max_items: Option<usize>,
    pub resamples: usize,
    /// Generation budget in bytes for model answers.
    pub max_len: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_items: None,
            resamples: RunConfig::default().resamples,
            max_len: 160,
        }
    }
}

/// What answers the benchmark items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BenchModel {
    /// Ground truth, with every k-th item corrupted when set.
    Oracle { corrupt_every: Option<usize> },
    Checkpoint(std::path::PathBuf),
}

impl std::str::FromStr for BenchModel {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "oracle" => BenchModel::Oracle { corrupt_every: None },
            _ => match s.strip_prefix("oracle-corrupt-").and_then(|k| k.parse().ok()) {
                Some(k) => BenchModel::Oracle { corrupt_every: Some(k) },
                None => BenchModel::Checkpoint(s.into()),
            },
        })
    }
}

/// Test-split items of `task`. Extra compile variants never reach the test
/// split, so each record yields at most one item.
pub fn eval_items(samples: &[CompiledSample], task: EvalTask, cfg: &BenchConfig) -> Result<Vec<EvalItem>> {
    let test: Vec<CompiledSample> = samples
        .iter()
        .filter(|s| s.triplet.split == Split::Test)
        .cloned()
        .collect();
    let items = build_eval_set(task, &test, cfg.seed, cfg.max_items)?;
    if items.is_empty() {
        bail!("no test items for task {task}");
    }
    Ok(items)
}

pub fn run_bench(tasks: &[EvalTask], model: &BenchModel, data: &Dataset, cfg: &BenchConfig) -> Result<Vec<EvalResult>> {
    let run_cfg = RunConfig {
        resamples: cfg.resamples,
        seed: cfg.seed,
    };
    let mut loaded = None;
    if let BenchModel::Checkpoint(path) = model {
        let ckpt = Checkpoint::load(path, DType::F32)?;
        let size = ckpt.model.config().vision.image_size();
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        loaded = Some(ModelGenerator::new(name, ckpt.model, data.image_store(size), cfg.max_len));
    }
    let mut results = Vec::new();
    for &task in tasks {
        let items = eval_items(&data.samples, task, cfg)?;
        let result = match (model, &loaded) {
            (BenchModel::Oracle { corrupt_every }, _) => run_task(&Oracle::new(&items, *corrupt_every), task, &items, run_cfg)?,
            (_, Some(generator)) => run_task(generator as &dyn Generator, task, &items, run_cfg)?,
            _ => unreachable!("checkpoint loaded above"),
        };
        tracing::info!(%task, n = items.len(), point = result.aggregate.point, "bench task");
        results.push(result);
    }
    Ok(results)
}

pub fn write_results(results: &[EvalResult], out: &Path) -> Result<()> {
    write_report(results, out)?;
    Ok(())
}
