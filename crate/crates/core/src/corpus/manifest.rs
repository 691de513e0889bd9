//! Manifest files and split-leakage validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{Record, Split, Triplet};
use super::CorpusError;

/// Counts per task and split; the first line of every manifest.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub total: usize,
    pub counts: BTreeMap<String, BTreeMap<Split, usize>>,
}

pub type ManifestStats = ManifestHeader;

impl ManifestHeader {
    pub fn from_triplets(triplets: &[Triplet]) -> Self {
        let mut counts: BTreeMap<String, BTreeMap<Split, usize>> = BTreeMap::new();
        for t in triplets {
            *counts
                .entry(t.task_id.clone())
                .or_default()
                .entry(t.split)
                .or_default() += 1;
        }
        Self {
            total: triplets.len(),
            counts,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    header: ManifestHeader,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub triplets: Vec<Triplet>,
}

pub fn write_manifest(path: &Path, triplets: &[Triplet]) -> Result<ManifestStats, CorpusError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let header = ManifestHeader::from_triplets(triplets);
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut w, &HeaderLine { header: header.clone() })?;
    w.write_all(b"\n")?;
    for t in triplets {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(header)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, CorpusError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let first = lines
        .next()
        .ok_or_else(|| CorpusError::Manifest("missing header line".into()))??;
    let header: HeaderLine = serde_json::from_str(&first)
        .map_err(|e| CorpusError::Manifest(format!("bad header: {e}")))?;
    let mut triplets = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Triplet = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Manifest(format!("line {}: {e}", i + 2)))?;
        triplets.push(t);
    }
    if ManifestHeader::from_triplets(&triplets) != header.header {
        return Err(CorpusError::Manifest("header counts disagree with body".into()));
    }
    Ok(Manifest {
        header: header.header,
        triplets,
    })
}

/// Image id to (study id, patient id).
#[derive(Debug, Clone, Default)]
pub struct RecordIndex {
    ids: BTreeMap<String, (String, String)>,
}

impl RecordIndex {
    pub fn from_records(records: &[Record]) -> Self {
        let ids = records
            .iter()
            .map(|r| {
                (
                    r.image.image_id.clone(),
                    (r.image.study_id.clone(), r.image.patient_id.clone()),
                )
            })
            .collect();
        Self { ids }
    }

    pub fn insert(&mut self, image_id: &str, study_id: &str, patient_id: &str) {
        self.ids
            .insert(image_id.into(), (study_id.into(), patient_id.into()));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeakLevel {
    Image,
    Study,
    Patient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageEntry {
    pub level: LeakLevel,
    pub id: String,
    pub splits: BTreeSet<Split>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub entries: Vec<LeakageEntry>,
}

impl LeakageReport {
    pub fn is_clean(&self) -> bool {
        self.entries.is_empty()
    }
}

impl fmt::Display for LeakageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .entries
            .iter()
            .map(|e| {
                let splits: Vec<&str> = e.splits.iter().map(|s| s.name()).collect();
                format!("{:?} {} in {}", e.level, e.id, splits.join("+")).to_lowercase()
            })
            .collect();
        write!(f, "{} offending id(s): {}", parts.len(), parts.join("; "))
    }
}

/// Finds ids that occur in more than one split across all manifests.
///
/// Levels are reported hierarchically: an image that leaks on its own is
/// reported once at image level, and its study and patient are only reported
/// if other images still put them in several splits. Likewise a leaking
/// study suppresses its patient.
pub fn leakage_report(manifests: &[&[Triplet]], index: &RecordIndex) -> Result<LeakageReport, CorpusError> {
    let mut image_splits: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
    for t in manifests.iter().flat_map(|m| m.iter()) {
        for img in &t.images {
            image_splits.entry(img).or_default().insert(t.split);
        }
    }
    let mut entries = Vec::new();
    let mut study_splits: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
    let mut clean_images = Vec::new();
    for (img, splits) in &image_splits {
        let (study, patient) = index
            .ids
            .get(*img)
            .ok_or_else(|| CorpusError::Manifest(format!("image {img} not in record index")))?;
        if splits.len() > 1 {
            entries.push(LeakageEntry {
                level: LeakLevel::Image,
                id: img.to_string(),
                splits: splits.clone(),
            });
        } else {
            study_splits.entry(study).or_default().extend(splits);
            clean_images.push((study.as_str(), patient.as_str(), splits));
        }
    }
    let mut patient_splits: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
    for (study, splits) in &study_splits {
        if splits.len() > 1 {
            entries.push(LeakageEntry {
                level: LeakLevel::Study,
                id: study.to_string(),
                splits: splits.clone(),
            });
        }
    }
    for (study, patient, splits) in clean_images {
        if study_splits[study].len() == 1 {
            patient_splits.entry(patient).or_default().extend(splits);
        }
    }
    for (patient, splits) in patient_splits {
        if splits.len() > 1 {
            entries.push(LeakageEntry {
                level: LeakLevel::Patient,
                id: patient.to_string(),
                splits,
            });
        }
    }
    Ok(LeakageReport { entries })
}

/// Like [`leakage_report`] but fails with [`CorpusError::Leakage`] unless the
/// report is empty.
pub fn validate_splits(manifests: &[&[Triplet]], index: &RecordIndex) -> Result<LeakageReport, CorpusError> {
    let report = leakage_report(manifests, index)?;
    if report.is_clean() {
        Ok(report)
    } else {
        Err(CorpusError::Leakage(report))
    }
}
