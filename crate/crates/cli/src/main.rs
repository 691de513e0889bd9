//! `cxr`: synthesize and compile corpora, train, benchmark, and run the
//! reader study.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use candle_core::DType;
use clap::{Parser, Subcommand};
use cxr_core::bench::EvalTask;
use cxr_core::corpus::synth::{synth_generate, write_synth, SynthConfig};
use cxr_core::corpus::{CorpusError, Split};
use cxr_model::{Checkpoint, CheckpointMeta, Model, ModelConfig};
use cxr_reader::{analyze, read_events, spawn, Study, StudyConfig, StudyError};
use cxr_train::{build_stage_data, check_order, run_pipeline, run_stage, PipelineConfig, Stage, StageConfig, StageDataOptions, TrainError};
use serde::{Deserialize, Serialize};
use serde_json::json;

use cxr_cli::dataset::{compile, load_source, write_dataset, write_jsonl, CompileConfig, Dataset};
use cxr_cli::evaluate::{run_bench, write_results, BenchConfig, BenchModel};
use cxr_cli::load_config;
use cxr_cli::toy::ToyConfig;

#[derive(Parser)]
#[command(name = "cxr", version, about = "Chest X-ray vision-language toolkit")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(clap::Args)]
struct Common {
    /// TOML or JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Verb {
    /// Generate a synthetic source (images, raw records, descriptor).
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_images: Option<usize>,
    },
    /// Ingest a source directory and compile instruction triplets.
    Compile {
        #[command(flatten)]
        common: Common,
        /// Directory holding source.json and records.jsonl.
        #[arg(long)]
        source: PathBuf,
    },
    /// Train one stage, or all stages with `--stage all`.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        stage: String,
        /// Compiled dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to continue from.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Score a checkpoint (or `oracle`) on benchmark tasks.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated task names, e.g. `view,grounding`.
        #[arg(long, value_delimiter = ',', required = true)]
        tasks: Vec<String>,
        #[arg(long)]
        model: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        max_items: Option<usize>,
    },
    /// Serve the reader study over HTTP until stopped.
    ServeStudy {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Analyze a reader-study event log.
    AnalyzeStudy {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy answer from a checkpoint for one instruction.
    Generate {
        #[arg(long)]
        model: PathBuf,
        /// Image files (PNG), in order.
        #[arg(long)]
        image: Vec<PathBuf>,
        #[arg(long)]
        instruction: String,
        #[arg(long, default_value_t = 160)]
        max_len: usize,
    },
}

fn echo_config<T: Serialize>(out: &Path, verb: &str, seed: Option<u64>, config: &T) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let doc = json!({"verb": verb, "seed": seed, "config": config});
    std::fs::write(out.join("resolved_config.json"), serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

fn synth(common: Common, n_images: Option<usize>) -> Result<()> {
    let mut cfg: SynthConfig = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = n_images {
        cfg.n_images = n;
    }
    echo_config(&common.out, "synth", Some(cfg.seed), &cfg)?;
    let files = write_synth(&common.out, &synth_generate(&cfg)?)?;
    println!("{}", json!({"records": files.records, "descriptor": files.descriptor, "images": files.images}));
    Ok(())
}

fn compile_verb(common: Common, source: &Path) -> Result<()> {
    let mut cfg: CompileConfig = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    echo_config(&common.out, "compile", Some(cfg.seed), &cfg)?;
    let (records, log) = load_source(source, &cfg.qc)?;
    std::fs::write(common.out.join("source_log.json"), serde_json::to_string_pretty(&log)?)?;
    let (samples, logs) = compile(&records, &cfg)?;
    write_dataset(&common.out, &records, &samples, &logs)?;
    let mut per_task: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &samples {
        *per_task.entry(s.triplet.task_id.as_str()).or_default() += 1;
    }
    println!("{}", json!({"records": records.len(), "samples": per_task}));
    Ok(())
}

/// Single-stage training config file.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainFile {
    /// Architecture for a fresh model; ignored when continuing a checkpoint.
    model: ModelConfig,
    data: StageDataOptions,
    /// Stage hyperparameters; the stage's defaults when absent.
    stage: Option<StageConfig>,
}

/// Full-pipeline config file; the toy defaults when absent.
#[derive(Debug, Serialize, Deserialize)]
#[serde(transparent)]
struct PipelineFile(PipelineConfig);

impl Default for PipelineFile {
    fn default() -> Self {
        PipelineFile(ToyConfig::default().pipeline)
    }
}

fn train(common: Common, stage: &str, data_dir: &Path, model: Option<&Path>) -> Result<()> {
    let data = Dataset::read(data_dir)?;
    if stage == "all" {
        if model.is_some() {
            bail!("--model cannot be combined with --stage all");
        }
        let PipelineFile(mut cfg) = load_config(common.config.as_deref())?;
        if let Some(seed) = common.seed {
            cfg.model_seed = seed;
            cfg.stages.iter_mut().for_each(|s| s.seed = seed);
        }
        echo_config(&common.out, "train", Some(cfg.model_seed), &cfg)?;
        let store = data.image_store(cfg.model.vision.image_size());
        let outcome = run_pipeline(&cfg, &data.triplets(), &store, &common.out)?;
        std::fs::write(common.out.join("outcome.json"), serde_json::to_string_pretty(&outcome)?)?;
        println!("{}", json!({"checkpoints": outcome.checkpoints, "retrieval": outcome.retrieval}));
        return Ok(());
    }
    let stage: Stage = stage.parse()?;
    let file: TrainFile = load_config(common.config.as_deref())?;
    let mut cfg = file.stage.clone().unwrap_or_else(|| StageConfig::defaults(stage));
    if cfg.stage != stage {
        bail!("config is for stage {}, not {stage}", cfg.stage);
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let init = match model {
        Some(path) => Checkpoint::load(path, DType::F32)?,
        None => Checkpoint::new(
            Model::new(file.model.clone(), cfg.seed, DType::F32)?,
            CheckpointMeta {
                lineage: Vec::new(),
                rng: None,
                extra: BTreeMap::new(),
            },
        ),
    };
    // Fail before images are loaded.
    check_order(&cfg, &init)?;
    echo_config(&common.out, "train", Some(cfg.seed), &json!({"stage": cfg, "data": file.data, "init": model}))?;
    let model_cfg = init.model.config().clone();
    let store = data.image_store(model_cfg.vision.image_size());
    let triplets = data.triplets();
    let (train, dropped) = build_stage_data(stage, &triplets, Split::Train, &store, &model_cfg, &file.data)?;
    let (eval, _) = build_stage_data(stage, &triplets, Split::Val, &store, &model_cfg, &file.data)?;
    let eval = (!eval.is_empty()).then_some(eval);
    let (ckpt, log) = run_stage(&cfg, &train, eval.as_ref(), init)?;
    let path = common.out.join(format!("{stage}.ckpt"));
    ckpt.save(&path)?;
    log.write_jsonl(&common.out.join(format!("{stage}.log.jsonl")))?;
    println!("{}", json!({"checkpoint": path, "dropped": dropped, "wall_s": log.wall_s}));
    Ok(())
}

fn bench(common: Common, tasks: &[String], model: &str, data_dir: &Path, max_items: Option<usize>) -> Result<()> {
    let mut cfg: BenchConfig = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if max_items.is_some() {
        cfg.max_items = max_items;
    }
    let tasks = tasks.iter().map(|t| t.parse::<EvalTask>()).collect::<Result<Vec<_>, _>>()?;
    echo_config(&common.out, "bench", Some(cfg.seed), &json!({"bench": cfg, "tasks": tasks, "model": model}))?;
    let model: BenchModel = model.parse()?;
    let data = Dataset::read(data_dir)?;
    let results = run_bench(&tasks, &model, &data, &cfg)?;
    write_results(&results, &common.out)?;
    let summary: BTreeMap<String, f64> = results.iter().map(|r| (r.task.to_string(), r.aggregate.point)).collect();
    println!("{}", json!({"results": summary}));
    Ok(())
}

fn serve_study(common: Common, port: u16) -> Result<()> {
    let path = common.config.as_deref().context("serve-study needs --config with the case pool")?;
    let mut cfg = StudyConfig::from_json_file(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    echo_config(&common.out, "serve-study", Some(cfg.seed), &cfg)?;
    let study = Study::open(cfg, &common.out.join("events.jsonl"))?;
    let addr = spawn(study, ([127, 0, 0, 1], port).into())?;
    println!("{}", json!({"listening": addr.to_string()}));
    loop {
        std::thread::park();
    }
}

fn analyze_study(log: &Path, out: &Path) -> Result<()> {
    let events = read_events(log)?;
    let report = analyze(&events)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("study_report.json"), serde_json::to_string_pretty(&report)?)?;
    write_jsonl(&out.join("events.jsonl"), &events)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn generate(model: &Path, images: &[PathBuf], instruction: &str, max_len: usize) -> Result<()> {
    let ckpt = Checkpoint::load(model, DType::F32)?;
    let size = ckpt.model.config().vision.image_size();
    let paths = images
        .iter()
        .enumerate()
        .map(|(i, p)| (i.to_string(), p.clone()))
        .collect();
    let store = cxr_model::ImageStore::new(paths, size);
    let pixels = (0..images.len())
        .map(|i| store.load(&i.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&[f32]> = pixels.iter().map(|p| p.as_slice()).collect();
    let text = ckpt.model.generate(&refs, instruction, max_len)?;
    println!("{}", json!({"response": text}));
    Ok(())
}

/// Short machine-readable error class.
fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(t) = e.downcast_ref::<TrainError>() {
        return match t {
            TrainError::StageOrder { .. } => "stage_order",
            TrainError::Config(_) | TrainError::UnknownStage(_) => "config",
            _ => "train",
        };
    }
    if let Some(c) = e.downcast_ref::<CorpusError>() {
        return match c {
            CorpusError::Leakage(_) => "leakage",
            _ => "corpus",
        };
    }
    if e.downcast_ref::<StudyError>().is_some() {
        return "study";
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return "io";
    }
    "error"
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.verb {
        Verb::Synth { common, n_images } => synth(common, n_images),
        Verb::Compile { common, source } => compile_verb(common, &source),
        Verb::Train { common, stage, data, model } => train(common, &stage, &data, model.as_deref()),
        Verb::Bench {
            common,
            tasks,
            model,
            data,
            max_items,
        } => bench(common, &tasks, &model, &data, max_items),
        Verb::ServeStudy { common, port } => serve_study(common, port),
        Verb::AnalyzeStudy { log, out } => analyze_study(&log, &out),
        Verb::Generate {
            model,
            image,
            instruction,
            max_len,
        } => generate(&model, &image, &instruction, max_len),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}");
            eprintln!("{}", json!({"error": error_kind(&e), "message": msg}));
            ExitCode::FAILURE
        }
    }
}
