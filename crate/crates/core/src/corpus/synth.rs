//! Synthetic chest-film generator.
//!
//! Each image is a grayscale frame with a bright body, dark lung fields and a
//! corner marker that tells AP from PA. Every configured finding owns a fixed
//! vertical slot inside the lungs; when present it is drawn as a bright shape
//! whose radius encodes severity. Patient-left is drawn on image-right, as on
//! a real frontal film. Lateral films show one lung field and carry no side.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::GrayImage;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::ingest::{FieldMap, SourceDescriptor};
use super::types::{
    Annotation, ImageRecord, PriorStudy, Progression, QaPair, Record, Sections, Split, View,
};
use super::CorpusError;
use crate::bbox::BBox;
use crate::metrics::{Finding, LabelValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Disk,
    Ring,
    Square,
    Cross,
}

impl Shape {
    /// Whether pixel offset `(dx, dy)` from the centre lies inside a shape of
    /// radius `r`.
    pub fn contains(self, dx: i32, dy: i32, r: u32) -> bool {
        let r = r as i32;
        let d2 = dx * dx + dy * dy;
        match self {
            Shape::Disk => d2 <= r * r,
            Shape::Ring => {
                let inner = (r - 1 - r / 3).max(0);
                d2 <= r * r && d2 > inner * inner
            }
            Shape::Square => dx.abs() <= r && dy.abs() <= r,
            Shape::Cross => {
                let arm = (r / 3).max(1);
                (dx.abs() <= arm && dy.abs() <= r) || (dy.abs() <= arm && dx.abs() <= r)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_images: usize,
    pub image_size: u32,
    pub findings: BTreeMap<Finding, Shape>,
    /// Probability that each configured finding is present on a first study.
    pub finding_prob: f64,
    /// Probability that a frontal finding sits on the patient's left.
    pub side_prob: f64,
    /// Inclusive radius range in pixels.
    pub radius_range: (u32, u32),
    /// Radii strictly above the threshold are severe. Findings without an
    /// entry use the midpoint of `radius_range`.
    pub severity_size_thresholds: BTreeMap<Finding, u32>,
    pub noise_sigma: f64,
    pub max_studies_per_patient: usize,
    /// Probability of each view, in AP, PA, lateral order.
    pub view_probs: [f64; 3],
    /// Fraction of patients in train, val and test.
    pub split_fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_images: 2000,
            image_size: 64,
            findings: [
                (Finding::PleuralEffusion, Shape::Disk),
                (Finding::Pneumothorax, Shape::Ring),
                (Finding::Consolidation, Shape::Square),
                (Finding::LungLesion, Shape::Cross),
            ]
            .into_iter()
            .collect(),
            finding_prob: 0.35,
            side_prob: 0.5,
            radius_range: (2, 5),
            severity_size_thresholds: BTreeMap::new(),
            noise_sigma: 6.0,
            max_studies_per_patient: 3,
            view_probs: [0.4, 0.4, 0.2],
            split_fractions: [0.8, 0.1, 0.1],
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidConfig(m));
        if self.n_images == 0 {
            return bad("n_images must be positive".into());
        }
        if self.image_size < 16 {
            return bad("image_size must be at least 16".into());
        }
        if self.findings.is_empty() {
            return bad("at least one finding is required".into());
        }
        if self.findings.contains_key(&Finding::NoFinding) {
            return bad("\"no finding\" cannot be drawn".into());
        }
        let (lo, hi) = self.radius_range;
        if lo == 0 || lo > hi {
            return bad(format!("bad radius range {lo}..={hi}"));
        }
        let slot = self.lung_height() / self.findings.len() as f64;
        if 2.0 * hi as f64 > 1.5 * slot {
            return bad(format!("radius {hi} too large for {} finding slots", self.findings.len()));
        }
        for (f, t) in &self.severity_size_thresholds {
            if !self.findings.contains_key(f) {
                return bad(format!("threshold for unconfigured finding {f}"));
            }
            if *t < lo || *t >= hi {
                return bad(format!("threshold {t} for {f} leaves a severity class empty"));
            }
        }
        for (name, p) in [("finding_prob", self.finding_prob), ("side_prob", self.side_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative".into());
        }
        if self.max_studies_per_patient == 0 {
            return bad("max_studies_per_patient must be positive".into());
        }
        for (name, w) in [("view_probs", self.view_probs), ("split_fractions", self.split_fractions)] {
            if w.iter().any(|x| *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return bad(format!("{name} must be non-negative with a positive sum"));
            }
        }
        Ok(())
    }

    pub fn threshold(&self, finding: Finding) -> u32 {
        self.severity_size_thresholds
            .get(&finding)
            .copied()
            .unwrap_or((self.radius_range.0 + self.radius_range.1) / 2)
    }

    pub fn severity(&self, finding: Finding, radius: u32) -> &'static str {
        if radius > self.threshold(finding) {
            "severe"
        } else {
            "mild"
        }
    }

    fn size(&self) -> f64 {
        self.image_size as f64
    }

    fn lung_top(&self) -> f64 {
        0.18 * self.size()
    }

    fn lung_height(&self) -> f64 {
        0.64 * self.size()
    }
}

/// One drawn finding with its exact construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedShape {
    pub finding: Finding,
    pub shape: Shape,
    pub side: Option<Side>,
    pub cx: i32,
    pub cy: i32,
    pub radius: u32,
}

impl PlacedShape {
    pub fn phrase(&self) -> String {
        match self.side {
            Some(s) => format!("{} {}", s.name(), self.finding.name()),
            None => self.finding.name().to_string(),
        }
    }

    /// Tight box around the rasterized shape, clipped to the frame.
    pub fn bbox(&self, size: u32) -> Option<BBox> {
        let r = self.radius as i32;
        let (mut min_x, mut min_y, mut max_x, mut max_y) = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (self.cx + dx, self.cy + dy);
                if x < 0 || y < 0 || x >= size as i32 || y >= size as i32 {
                    continue;
                }
                if self.shape.contains(dx, dy, self.radius) {
                    min_x = min_x.min(x);
                    min_y = min_y.min(y);
                    max_x = max_x.max(x);
                    max_y = max_y.max(y);
                }
            }
        }
        (min_x <= max_x).then(|| {
            BBox::from_pixel_bounds(min_x as u32, min_y as u32, max_x as u32, max_y as u32, size, size)
                .expect("bounds inside frame")
        })
    }
}

#[derive(Debug, Clone)]
pub struct SynthItem {
    pub record: Record,
    /// Row-major 8-bit pixels, `image_size` squared.
    pub pixels: Vec<u8>,
    pub shapes: Vec<PlacedShape>,
    /// Full reference report with INDICATION / FINDINGS / IMPRESSION headers.
    pub report: String,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub config: SynthConfig,
    pub items: Vec<SynthItem>,
}

impl SynthOutput {
    pub fn records(&self) -> Vec<Record> {
        self.items.iter().map(|i| i.record.clone()).collect()
    }
}

const INDICATIONS: &[&str] = &[
    "Cough.",
    "Shortness of breath.",
    "Chest pain.",
    "Fever and chills.",
    "Preoperative evaluation.",
    "Follow-up.",
];

fn weighted<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

/// Finding state carried from one study of a patient to the next.
#[derive(Debug, Clone, Copy)]
struct State {
    side: Side,
    radius: u32,
}

fn report_sections(cfg: &SynthConfig, view: View, shapes: &[PlacedShape], rng: &mut ChaCha8Rng) -> Sections {
    let view_word = match view {
        View::Lateral => "Lateral".to_string(),
        v => v.name().to_string(),
    };
    let mut findings = vec![format!("{view_word} view of the chest.")];
    let mut impression = Vec::new();
    for s in shapes {
        let severity = cfg.severity(s.finding, s.radius);
        let phrase = match s.side {
            Some(side) => format!("{severity} {} {}", side.name(), s.finding.name()),
            None => format!("{severity} {}", s.finding.name()),
        };
        findings.push(format!("There is a {phrase}."));
        impression.push(format!("{}.", capitalize(&phrase)));
    }
    if shapes.is_empty() {
        findings.push("The lungs are clear.".into());
        impression.push("No acute cardiopulmonary process.".into());
    }
    for f in cfg.findings.keys() {
        if !shapes.iter().any(|s| s.finding == *f) {
            findings.push(format!("No {}.", f.name()));
        }
    }
    Sections {
        indication: INDICATIONS.choose(rng).expect("non-empty").to_string(),
        findings: findings.join(" "),
        impression: impression.join(" "),
    }
}

pub fn report_text(sections: &Sections) -> String {
    format!(
        "INDICATION: {}\nFINDINGS: {}\nIMPRESSION: {}",
        sections.indication, sections.findings, sections.impression
    )
}

fn render(cfg: &SynthConfig, view: View, shapes: &[PlacedShape], rng: &mut ChaCha8Rng) -> Vec<u8> {
    let n = cfg.image_size as i32;
    let size = cfg.size();
    let mut img = vec![30.0f64; (n * n) as usize];
    let lungs: Vec<(f64, f64, f64, f64)> = match view {
        View::Lateral => vec![(0.5, 0.5, 0.30, 0.36)],
        _ => vec![(0.30, 0.5, 0.17, 0.36), (0.70, 0.5, 0.17, 0.36)],
    };
    for y in 0..n {
        for x in 0..n {
            let (fx, fy) = ((x as f64 + 0.5) / size, (y as f64 + 0.5) / size);
            let mut v = 30.0;
            if (0.08..0.92).contains(&fx) && (0.06..0.96).contains(&fy) {
                v = 140.0;
            }
            for &(cx, cy, ax, ay) in &lungs {
                let e = ((fx - cx) / ax).powi(2) + ((fy - cy) / ay).powi(2);
                if e <= 1.0 {
                    v = 60.0;
                }
            }
            img[(y * n + x) as usize] = v;
        }
    }
    let m = (0.1 * size).round().max(2.0) as i32;
    let marker_x0 = match view {
        View::AP => Some(1),
        View::PA => Some(n - 1 - m),
        _ => None,
    };
    if let Some(x0) = marker_x0 {
        for y in 1..1 + m {
            for x in x0..x0 + m {
                img[(y * n + x) as usize] = 255.0;
            }
        }
    }
    for s in shapes {
        let r = s.radius as i32;
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (s.cx + dx, s.cy + dy);
                if x >= 0 && y >= 0 && x < n && y < n && s.shape.contains(dx, dy, s.radius) {
                    img[(y * n + x) as usize] = 230.0;
                }
            }
        }
    }
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    img.into_iter()
        .map(|v| {
            let jitter = if cfg.noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
            (v + jitter).round().clamp(0.0, 255.0) as u8
        })
        .collect()
}

fn place(cfg: &SynthConfig, view: View, states: &BTreeMap<Finding, State>, rng: &mut ChaCha8Rng) -> Vec<PlacedShape> {
    let slot_h = cfg.lung_height() / cfg.findings.len() as f64;
    let size = cfg.size();
    let mut out = Vec::new();
    for (slot, (finding, shape)) in cfg.findings.iter().enumerate() {
        let Some(state) = states.get(finding) else { continue };
        let (side, x_frac) = match view {
            View::Lateral => (None, 0.5),
            // Patient-left appears on the image's right.
            _ => match state.side {
                Side::Left => (Some(Side::Left), 0.70),
                Side::Right => (Some(Side::Right), 0.30),
            },
        };
        let jitter = rng.random_range(-1..=1);
        out.push(PlacedShape {
            finding: *finding,
            shape: *shape,
            side,
            cx: (x_frac * size).floor() as i32 + jitter,
            cy: (cfg.lung_top() + (slot as f64 + 0.5) * slot_h).floor() as i32,
            radius: state.radius,
        });
    }
    out
}

fn next_states(
    cfg: &SynthConfig,
    prev: Option<&BTreeMap<Finding, State>>,
    rng: &mut ChaCha8Rng,
) -> (BTreeMap<Finding, State>, BTreeMap<Finding, Progression>) {
    let (lo, hi) = cfg.radius_range;
    let mut states = BTreeMap::new();
    let mut progression = BTreeMap::new();
    for f in cfg.findings.keys() {
        let fresh = |rng: &mut ChaCha8Rng| State {
            side: if rng.random_bool(cfg.side_prob) { Side::Left } else { Side::Right },
            radius: rng.random_range(lo..=hi),
        };
        match prev.and_then(|p| p.get(f)) {
            None => {
                let p = if prev.is_some() { cfg.finding_prob / 2.0 } else { cfg.finding_prob };
                if rng.random_bool(p) {
                    states.insert(*f, fresh(rng));
                    if prev.is_some() {
                        progression.insert(*f, Progression::Worsened);
                    }
                }
            }
            Some(old) => {
                let (radius, p) = match rng.random_range(0..3) {
                    0 if old.radius > lo => (Some(rng.random_range(lo..old.radius)), Progression::Improved),
                    0 => (None, Progression::Improved),
                    1 => (Some(old.radius), Progression::Stable),
                    _ if old.radius < hi => (Some(rng.random_range(old.radius + 1..=hi)), Progression::Worsened),
                    _ => (Some(old.radius), Progression::Stable),
                };
                if let Some(radius) = radius {
                    states.insert(*f, State { side: old.side, radius });
                }
                progression.insert(*f, p);
            }
        }
    }
    (states, progression)
}

/// Generates a synthetic corpus. Pure function of the config (including its
/// seed).
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthOutput, CorpusError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut items = Vec::with_capacity(cfg.n_images);
    let mut patient = 0usize;
    while items.len() < cfg.n_images {
        let patient_id = format!("P{patient:05}");
        patient += 1;
        let split = Split::ALL[weighted(&cfg.split_fractions, &mut rng)];
        let studies = rng
            .random_range(1..=cfg.max_studies_per_patient)
            .min(cfg.n_images - items.len());
        let mut prev: Option<(String, BTreeMap<Finding, State>)> = None;
        for _ in 0..studies {
            let n = items.len();
            let image_id = format!("I{n:06}");
            let study_id = format!("S{n:06}");
            let view = View::KNOWN[weighted(&cfg.view_probs, &mut rng)];
            let (states, progression) = next_states(cfg, prev.as_ref().map(|p| &p.1), &mut rng);
            let shapes = place(cfg, view, &states, &mut rng);
            let pixels = render(cfg, view, &shapes, &mut rng);
            let sections = report_sections(cfg, view, &shapes, &mut rng);

            let mut labels: BTreeMap<Finding, LabelValue> =
                Finding::ALL.into_iter().map(|f| (f, LabelValue::Absent)).collect();
            for s in &shapes {
                labels.insert(s.finding, LabelValue::Present);
            }
            if shapes.is_empty() {
                labels.insert(Finding::NoFinding, LabelValue::Present);
            }
            let mut boxes = BTreeMap::new();
            for s in &shapes {
                if let Some(b) = s.bbox(cfg.image_size) {
                    boxes.insert(s.phrase(), vec![b]);
                }
            }
            let asked = *cfg.findings.keys().collect::<Vec<_>>().choose(&mut rng).expect("non-empty");
            let qa = vec![QaPair {
                question: format!("Is there {} in this image?", article(asked.name())),
                answer: if states.contains_key(asked) { "yes" } else { "no" }.into(),
            }];
            let prior = prev.as_ref().map(|(sid, _)| PriorStudy {
                study_id: sid.clone(),
                progression: progression.clone(),
            });
            let report = report_text(&sections);
            items.push(SynthItem {
                record: Record {
                    image: ImageRecord {
                        image_id: image_id.clone(),
                        patient_id: patient_id.clone(),
                        study_id: study_id.clone(),
                        view,
                        pixels_ref: format!("images/{image_id}.png"),
                        source_id: "synthetic".into(),
                        split,
                    },
                    annotation: Annotation {
                        labels,
                        boxes,
                        sections,
                        prior,
                        qa,
                    },
                },
                pixels,
                shapes,
                report,
            });
            prev = Some((study_id, states));
        }
    }
    Ok(SynthOutput {
        config: cfg.clone(),
        items,
    })
}

fn article(noun: &str) -> String {
    let vowel = noun.starts_with(['a', 'e', 'i', 'o', 'u']);
    format!("{} {noun}", if vowel { "an" } else { "a" })
}

/// Field mapping matching the raw records written by [`write_synth`].
pub fn synth_field_map() -> FieldMap {
    let p = |s: &str| Some(format!("/{s}"));
    FieldMap {
        image_id: "/image_id".into(),
        patient_id: "/patient_id".into(),
        study_id: "/study_id".into(),
        split: "/split".into(),
        pixels: "/path".into(),
        view: p("view"),
        labels: p("labels"),
        boxes: p("boxes"),
        report: p("report"),
        indication: None,
        findings: None,
        impression: None,
        prior_study: p("prior_study"),
        progression: p("progression"),
        qa: p("qa"),
    }
}

fn raw_record(item: &SynthItem) -> serde_json::Value {
    let r = &item.record;
    let labels: BTreeMap<&str, &str> = r
        .annotation
        .labels
        .iter()
        .map(|(f, v)| {
            let v = match v {
                LabelValue::Present => "present",
                LabelValue::Absent => "absent",
                LabelValue::Uncertain => "uncertain",
            };
            (f.name(), v)
        })
        .collect();
    let mut raw = json!({
        "image_id": r.image.image_id,
        "patient_id": r.image.patient_id,
        "study_id": r.image.study_id,
        "split": r.image.split,
        "view": r.image.view.name(),
        "path": r.image.pixels_ref,
        "labels": labels,
        "boxes": r.annotation.boxes,
        "report": item.report,
        "qa": r.annotation.qa,
    });
    if let Some(prior) = &r.annotation.prior {
        let progression: BTreeMap<&str, &str> =
            prior.progression.iter().map(|(f, p)| (f.name(), p.name())).collect();
        raw["prior_study"] = json!(prior.study_id);
        raw["progression"] = json!(progression);
    }
    raw
}

/// Files written by [`write_synth`].
#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub records: PathBuf,
    pub descriptor: PathBuf,
    pub images: PathBuf,
}

/// Writes PNGs, raw records (`records.jsonl`) and a source descriptor
/// (`source.json`) whose image root is `dir`.
pub fn write_synth(dir: &Path, out: &SynthOutput) -> Result<SynthFiles, CorpusError> {
    let images = dir.join("images");
    fs::create_dir_all(&images)?;
    let size = out.config.image_size;
    let records = dir.join("records.jsonl");
    let mut w = std::io::BufWriter::new(fs::File::create(&records)?);
    for item in &out.items {
        let img = GrayImage::from_raw(size, size, item.pixels.clone()).expect("pixel buffer size");
        img.save(dir.join(&item.record.image.pixels_ref))?;
        serde_json::to_writer(&mut w, &raw_record(item))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    let descriptor = SourceDescriptor {
        source_id: "synthetic".into(),
        image_root: Some(dir.to_path_buf()),
        fields: synth_field_map(),
        label_values: Default::default(),
        view_values: Default::default(),
        split_values: Default::default(),
    };
    let desc_path = dir.join("source.json");
    fs::write(&desc_path, serde_json::to_string_pretty(&descriptor)?)?;
    Ok(SynthFiles {
        records,
        descriptor: desc_path,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::label_extract;

    fn small(n: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            n_images: n,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn single_finding_config() {
        let cfg = SynthConfig {
            n_images: 4,
            findings: [(Finding::PleuralEffusion, Shape::Disk)].into_iter().collect(),
            ..Default::default()
        };
        let out = synth_generate(&cfg).unwrap();
        assert_eq!(out.items.len(), 4);
        for item in &out.items {
            let v = item.record.annotation.labels[&Finding::PleuralEffusion];
            assert!(matches!(v, LabelValue::Present | LabelValue::Absent));
        }
    }

    #[test]
    fn severity_threshold() {
        let cfg = SynthConfig::default();
        let t = cfg.threshold(Finding::Pneumothorax);
        assert_eq!(cfg.severity(Finding::Pneumothorax, t), "mild");
        assert_eq!(cfg.severity(Finding::Pneumothorax, t + 1), "severe");
        let out = synth_generate(&small(300, 3)).unwrap();
        for item in &out.items {
            for s in &item.shapes {
                let word = if s.radius > cfg.threshold(s.finding) { "severe" } else { "mild" };
                let needle = format!("{word} {}", s.phrase());
                assert!(item.record.annotation.sections.findings.contains(&needle));
            }
        }
    }

    #[test]
    fn reports_round_trip_through_labeler() {
        let out = synth_generate(&small(300, 5)).unwrap();
        for item in &out.items {
            let s = &item.record.annotation.sections;
            let text = format!("{} {}", s.findings, s.impression);
            assert_eq!(label_extract(&text), item.record.annotation.label_vector(), "{text}");
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = synth_generate(&small(50, 1)).unwrap();
        let b = synth_generate(&small(50, 1)).unwrap();
        let c = synth_generate(&small(50, 2)).unwrap();
        assert_eq!(a.records(), b.records());
        assert!(a.items.iter().zip(&b.items).all(|(x, y)| x.pixels == y.pixels));
        assert_ne!(a.records(), c.records());
    }

    #[test]
    fn patients_stay_in_one_split_and_priors_precede() {
        let out = synth_generate(&small(400, 9)).unwrap();
        let mut split_of = BTreeMap::new();
        let mut studies = BTreeMap::new();
        for item in &out.items {
            let img = &item.record.image;
            assert_eq!(*split_of.entry(img.patient_id.clone()).or_insert(img.split), img.split);
            if let Some(p) = &item.record.annotation.prior {
                let prior_patient: &String = studies.get(&p.study_id).expect("prior generated first");
                assert_eq!(prior_patient, &img.patient_id);
            }
            studies.insert(img.study_id.clone(), img.patient_id.clone());
        }
        assert!(out.items.iter().any(|i| i.record.annotation.prior.is_some()));
    }

    #[test]
    fn lateral_films_have_no_side() {
        let out = synth_generate(&small(300, 4)).unwrap();
        for item in out.items.iter().filter(|i| i.record.image.view == View::Lateral) {
            assert!(item.shapes.iter().all(|s| s.side.is_none()));
        }
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = SynthConfig::default();
        cfg.findings.insert(Finding::NoFinding, Shape::Disk);
        assert!(cfg.validate().is_err());
        let cfg = SynthConfig {
            radius_range: (3, 2),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SynthConfig {
            severity_size_thresholds: [(Finding::Pneumothorax, 5)].into_iter().collect(),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_parses_from_json() {
        let cfg: SynthConfig = parse_cfg(
            r#"{"n_images": 10, "findings": {"pneumothorax": "ring"}, "severity_size_thresholds": {"pneumothorax": 3}}"#,
        );
        assert_eq!(cfg.n_images, 10);
        assert_eq!(cfg.threshold(Finding::Pneumothorax), 3);
        cfg.validate().unwrap();
    }

    fn parse_cfg(json: &str) -> SynthConfig {
        serde_json::from_str(json).unwrap()
    }
}
