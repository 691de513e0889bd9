//! Source loading and triplet compilation, and the on-disk layout shared by
//! the `compile`, `train` and `bench` verbs.
//!
//! A compiled dataset directory holds `records.jsonl` (normalised records,
//! image paths resolved), `samples.jsonl` (triplets with structured answers),
//! `manifest.jsonl`, `compile_log.json` and `leakage.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cxr_core::corpus::{
    default_registry, ingest_source, qc_filter, validate_splits, write_manifest, CompileLog,
    CompiledSample, FsProbe, QcRejection, QcRules, Record, RecordIndex, Rejection,
    SourceDescriptor, Split, TaskKind, Triplet,
};
use cxr_core::seed::derive_seed;
use cxr_model::ImageStore;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompileConfig {
    /// Task id to number of compile variants. Variant 0 uses `seed` and
    /// covers every split; further variants draw fresh templates and option
    /// orders and only add training rows.
    pub tasks: BTreeMap<String, usize>,
    pub seed: u64,
    pub qc: QcRules,
}

impl Default for CompileConfig {
    fn default() -> Self {
        Self {
            tasks: TaskKind::ALL.iter().map(|k| (k.default_id().to_string(), 1)).collect(),
            seed: 0,
            qc: QcRules::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SourceLog {
    pub ingest_rejections: Vec<Rejection>,
    pub qc_rejections: Vec<QcRejection>,
    pub dropped_fields: BTreeMap<String, usize>,
}

/// Reads `source.json` and `records.jsonl` from `dir`, normalises them and
/// applies quality control.
pub fn load_source(dir: &Path, qc: &QcRules) -> Result<(Vec<Record>, SourceLog)> {
    let desc_path = dir.join("source.json");
    let desc: SourceDescriptor = serde_json::from_str(
        &fs::read_to_string(&desc_path).with_context(|| format!("reading {}", desc_path.display()))?,
    )?;
    let raw: Vec<serde_json::Value> = read_jsonl(&dir.join("records.jsonl"))?;
    let ingested = ingest_source(&desc, &raw);
    let (records, qc_rejections) = qc_filter(ingested.records, qc, &FsProbe);
    Ok((
        records,
        SourceLog {
            ingest_rejections: ingested.rejections,
            qc_rejections,
            dropped_fields: ingested.dropped_fields,
        },
    ))
}

/// Seed of compile variant `v`.
pub fn variant_seed(seed: u64, v: usize) -> u64 {
    if v == 0 {
        seed
    } else {
        derive_seed(seed, &["variant", &v.to_string()])
    }
}

/// Compiles every configured task. Samples come back grouped by task in
/// task-id order, variant 0 first.
pub fn compile(records: &[Record], cfg: &CompileConfig) -> Result<(Vec<CompiledSample>, BTreeMap<String, CompileLog>)> {
    let registry = default_registry();
    let mut samples = Vec::new();
    let mut logs = BTreeMap::new();
    for (task, &variants) in &cfg.tasks {
        if variants == 0 {
            bail!("task {task} has zero variants");
        }
        for v in 0..variants {
            let (s, log) = registry.compile_samples(task, records, variant_seed(cfg.seed, v))?;
            if v == 0 {
                logs.insert(task.clone(), log);
                samples.extend(s);
            } else {
                samples.extend(s.into_iter().filter(|s| s.triplet.split == Split::Train));
            }
        }
    }
    Ok((samples, logs))
}

/// Writes a compiled dataset and refuses to finish if any patient, study or
/// image crosses a split boundary.
pub fn write_dataset(
    dir: &Path,
    records: &[Record],
    samples: &[CompiledSample],
    logs: &BTreeMap<String, CompileLog>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let triplets: Vec<Triplet> = samples.iter().map(|s| s.triplet.clone()).collect();
    let leakage = validate_splits(&[&triplets], &RecordIndex::from_records(records))?;
    fs::write(dir.join("leakage.json"), serde_json::to_string_pretty(&leakage)?)?;
    write_jsonl(&dir.join("records.jsonl"), records)?;
    write_jsonl(&dir.join("samples.jsonl"), samples)?;
    write_manifest(&dir.join("manifest.jsonl"), &triplets)?;
    fs::write(dir.join("compile_log.json"), serde_json::to_string_pretty(logs)?)?;
    Ok(())
}

pub struct Dataset {
    pub records: Vec<Record>,
    pub samples: Vec<CompiledSample>,
}

impl Dataset {
    pub fn read(dir: &Path) -> Result<Self> {
        Ok(Self {
            records: read_jsonl(&dir.join("records.jsonl"))?,
            samples: read_jsonl(&dir.join("samples.jsonl"))?,
        })
    }

    pub fn triplets(&self) -> Vec<Triplet> {
        self.samples.iter().map(|s| s.triplet.clone()).collect()
    }

    pub fn image_store(&self, size: (usize, usize)) -> ImageStore {
        image_store(&self.records, size)
    }
}

pub fn image_store(records: &[Record], size: (usize, usize)) -> ImageStore {
    let paths: BTreeMap<String, PathBuf> = records
        .iter()
        .map(|r| (r.image.image_id.clone(), PathBuf::from(&r.image.pixels_ref)))
        .collect();
    ImageStore::new(paths, size)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use cxr_core::corpus::synth::{synth_generate, write_synth, SynthConfig};

    #[test]
    fn variants_only_add_training_rows() {
        let dir = tempfile::tempdir().unwrap();
        let out = synth_generate(&SynthConfig {
            n_images: 60,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        write_synth(dir.path(), &out).unwrap();
        let (records, log) = load_source(dir.path(), &QcRules::default()).unwrap();
        assert!(log.ingest_rejections.is_empty());
        let one = CompileConfig {
            tasks: [("disease_binary".to_string(), 1)].into_iter().collect(),
            ..Default::default()
        };
        let three = CompileConfig {
            tasks: [("disease_binary".to_string(), 3)].into_iter().collect(),
            ..Default::default()
        };
        let (a, _) = compile(&records, &one).unwrap();
        let (b, _) = compile(&records, &three).unwrap();
        let held = |s: &[CompiledSample]| s.iter().filter(|x| x.triplet.split != Split::Train).count();
        assert_eq!(held(&a), held(&b));
        assert!(b.len() > a.len());
        assert_eq!(&b[..a.len()], &a[..]);

        let ds_dir = dir.path().join("ds");
        write_dataset(&ds_dir, &records, &b, &BTreeMap::new()).unwrap();
        let back = Dataset::read(&ds_dir).unwrap();
        assert_eq!(back.samples, b);
        let store = back.image_store((64, 64));
        assert_eq!(store.load(&records[0].image.image_id).unwrap().len(), 64 * 64);
    }
}
