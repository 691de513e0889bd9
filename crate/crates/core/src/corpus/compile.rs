//! Compiling canonical records into instruction triplets.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mcq::{make_mcq, render_options, Mcq};
use super::tasks::{AnnotationKind, InstructionTemplate, TaskKind, TaskRegistry, TaskSpec};
use super::types::{Progression, Record, Triplet, View};
use super::CorpusError;
use crate::bbox::BBox;
use crate::metrics::{Finding, LabelValue};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleAnswer {
    Option(usize),
    Box(BBox),
    Text(String),
}

/// A triplet plus the structured answer it was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledSample {
    pub record_id: String,
    pub triplet: Triplet,
    pub options: Option<Vec<String>>,
    pub answer: SampleAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub image_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileLog {
    pub skipped: Vec<SkipEntry>,
}

struct Built {
    images: Vec<String>,
    values: Vec<(&'static str, String)>,
    response: String,
    options: Option<Vec<String>>,
    answer: SampleAnswer,
}

impl Built {
    fn mcq(images: Vec<String>, mut values: Vec<(&'static str, String)>, mcq: Mcq) -> Self {
        values.push(("options", render_options(&mcq.options)));
        Built {
            images,
            values,
            response: mcq.answer().to_string(),
            answer: SampleAnswer::Option(mcq.answer_index),
            options: Some(mcq.options),
        }
    }
}

fn has_annotation(record: &Record, kind: AnnotationKind) -> bool {
    let a = &record.annotation;
    match kind {
        AnnotationKind::View => record.image.view != View::Unknown,
        AnnotationKind::Labels => !a.labels.is_empty(),
        AnnotationKind::Boxes => !a.boxes.is_empty(),
        AnnotationKind::Findings => !a.sections.findings.trim().is_empty(),
        AnnotationKind::Impression => !a.sections.impression.trim().is_empty(),
        AnnotationKind::Prior => a.prior.as_ref().is_some_and(|p| !p.progression.is_empty()),
        AnnotationKind::Qa => !a.qa.is_empty(),
    }
}

fn labelled(record: &Record, value: LabelValue) -> Vec<Finding> {
    record
        .annotation
        .labels
        .iter()
        .filter(|(f, v)| **f != Finding::NoFinding && **v == value)
        .map(|(f, _)| *f)
        .collect()
}

fn join_findings(set: &[Finding]) -> String {
    let mut sorted = set.to_vec();
    sorted.sort();
    sorted.iter().map(|f| f.name()).collect::<Vec<_>>().join(", ")
}

/// Side and severity words mentioned with a positive finding in the findings
/// section, if any.
pub(crate) fn finding_attributes(findings: &str, finding: Finding) -> (Option<&'static str>, Option<&'static str>) {
    let name = finding.name();
    for sentence in findings.split(['.', ';', '\n']) {
        let lower = sentence.to_lowercase();
        if !lower.contains(name) {
            continue;
        }
        let words: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect();
        if words.first() == Some(&"no") || words.contains(&"without") {
            continue;
        }
        let side = ["left", "right"].into_iter().find(|s| words.contains(s));
        let severity = ["mild", "severe", "small", "large"]
            .into_iter()
            .find(|s| words.contains(s));
        return (side, severity);
    }
    (None, None)
}

fn opposite(word: &str) -> &'static str {
    match word {
        "left" => "right",
        "right" => "left",
        "mild" => "severe",
        "severe" => "mild",
        "small" => "large",
        _ => "small",
    }
}

fn build(
    kind: TaskKind,
    k: usize,
    record: &Record,
    studies: &BTreeMap<&str, &Record>,
    rng: &mut ChaCha8Rng,
) -> Result<Built, String> {
    let image = record.image.image_id.clone();
    let ann = &record.annotation;
    let mcq_err = |e: CorpusError| e.to_string();
    match kind {
        TaskKind::ViewClassification => {
            let correct = record.image.view.name();
            let pool: Vec<&str> = View::KNOWN.iter().map(|v| v.name()).collect();
            let mcq = make_mcq(correct, &pool, k, rng).map_err(mcq_err)?;
            Ok(Built::mcq(vec![image], vec![], mcq))
        }
        TaskKind::DiseaseBinary => {
            let present = labelled(record, LabelValue::Present);
            let absent = labelled(record, LabelValue::Absent);
            let want_yes = rng.random_bool(0.5);
            let (yes, candidates) = match (want_yes, present.is_empty(), absent.is_empty()) {
                (_, true, true) => return Err("no definite labels".into()),
                (true, false, _) | (false, false, true) => (true, present),
                _ => (false, absent),
            };
            let finding = *candidates.choose(rng).expect("non-empty");
            let (correct, other) = if yes { ("Yes", "No") } else { ("No", "Yes") };
            let mcq = make_mcq(correct, &[other], k, rng).map_err(mcq_err)?;
            Ok(Built::mcq(vec![image], vec![("finding", finding.name().to_string())], mcq))
        }
        TaskKind::DiseaseSingle => {
            let present = labelled(record, LabelValue::Present);
            if present.len() != 1 || !labelled(record, LabelValue::Uncertain).is_empty() {
                return Err("needs exactly one definite finding".into());
            }
            let pool: Vec<&str> = labelled(record, LabelValue::Absent)
                .into_iter()
                .map(Finding::name)
                .collect();
            let mcq = make_mcq(present[0].name(), &pool, k, rng).map_err(mcq_err)?;
            Ok(Built::mcq(vec![image], vec![], mcq))
        }
        TaskKind::DiseaseMulti => {
            let present = labelled(record, LabelValue::Present);
            if present.len() < 2 || !labelled(record, LabelValue::Uncertain).is_empty() {
                return Err("needs at least two definite findings".into());
            }
            let absent = labelled(record, LabelValue::Absent);
            let mut pool = Vec::new();
            for &a in &absent {
                let mut added = present.clone();
                added.push(a);
                pool.push(join_findings(&added));
                for i in 0..present.len() {
                    let mut swapped = present.clone();
                    swapped[i] = a;
                    pool.push(join_findings(&swapped));
                }
            }
            if present.len() > 2 {
                for i in 0..present.len() {
                    let mut dropped = present.clone();
                    dropped.remove(i);
                    pool.push(join_findings(&dropped));
                }
            }
            let mcq = make_mcq(&join_findings(&present), &pool, k, rng).map_err(mcq_err)?;
            Ok(Built::mcq(vec![image], vec![], mcq))
        }
        TaskKind::FineGrained => {
            let mut choices = Vec::new();
            for f in labelled(record, LabelValue::Present) {
                let (side, severity) = finding_attributes(&ann.sections.findings, f);
                if let Some(s) = side {
                    choices.push((f, s, true));
                }
                if let Some(s) = severity {
                    choices.push((f, s, false));
                }
            }
            let &(finding, word, is_side) =
                choices.choose(rng).ok_or("no side or severity attribute")?;
            let phrase = |w: &str| {
                if is_side {
                    format!("{w}-sided {}", finding.name())
                } else {
                    format!("{w} {}", finding.name())
                }
            };
            let mcq = make_mcq(&phrase(word), &[phrase(opposite(word))], k, rng).map_err(mcq_err)?;
            Ok(Built::mcq(vec![image], vec![], mcq))
        }
        TaskKind::Grounding => {
            let phrases: Vec<&String> = ann.boxes.iter().filter(|(_, b)| !b.is_empty()).map(|(p, _)| p).collect();
            let phrase = *phrases.choose(rng).ok_or("no boxes")?;
            let bbox = ann.boxes[phrase][0];
            Ok(Built {
                images: vec![image],
                values: vec![("phrase", phrase.clone())],
                response: bbox.to_text(),
                options: None,
                answer: SampleAnswer::Box(bbox),
            })
        }
        TaskKind::Temporal => {
            let prior = ann.prior.as_ref().ok_or("no prior")?;
            let prior_record = studies
                .get(prior.study_id.as_str())
                .ok_or("prior image missing")?;
            if prior_record.image.split != record.image.split {
                return Err("prior split mismatch".into());
            }
            let findings: Vec<(&Finding, &Progression)> = prior.progression.iter().collect();
            let (finding, progression) = *findings.choose(rng).ok_or("no progression")?;
            let pool: Vec<&str> = Progression::ALL.iter().map(|p| p.name()).collect();
            let mcq = make_mcq(progression.name(), &pool, k, rng).map_err(mcq_err)?;
            Ok(Built::mcq(
                vec![prior_record.image.image_id.clone(), image],
                vec![("finding", finding.name().to_string())],
                mcq,
            ))
        }
        TaskKind::Vqa => {
            let yes_no: Vec<_> = ann
                .qa
                .iter()
                .filter_map(|qa| match qa.answer.trim().to_lowercase().as_str() {
                    "yes" => Some((qa, "Yes", "No")),
                    "no" => Some((qa, "No", "Yes")),
                    _ => None,
                })
                .collect();
            let (qa, correct, other) = *yes_no.choose(rng).ok_or("no yes/no question")?;
            let mcq = make_mcq(correct, &[other], k, rng).map_err(mcq_err)?;
            Ok(Built::mcq(vec![image], vec![("question", qa.question.trim().to_string())], mcq))
        }
        TaskKind::FindingsGeneration => {
            let text = ann.sections.findings.trim().to_string();
            Ok(Built {
                images: vec![image],
                values: vec![],
                response: text.clone(),
                options: None,
                answer: SampleAnswer::Text(text),
            })
        }
        TaskKind::FindingsSummarization => {
            let impression = ann.sections.impression.trim().to_string();
            Ok(Built {
                images: vec![],
                values: vec![("findings_section", ann.sections.findings.trim().to_string())],
                response: impression.clone(),
                options: None,
                answer: SampleAnswer::Text(impression),
            })
        }
    }
}

/// Compiles one task into samples that keep the structured answer.
///
/// Records are processed in image-id order; each record draws from its own
/// generator derived from `(seed, task_id, image_id)`, so the output does not
/// depend on scheduling.
pub fn compile_samples(
    spec: &TaskSpec,
    records: &[Record],
    templates: &[InstructionTemplate],
    seed: u64,
) -> Result<(Vec<CompiledSample>, CompileLog), CorpusError> {
    spec.validate()?;
    if templates.is_empty() {
        return Err(CorpusError::InvalidTemplate {
            task: spec.task_id.clone(),
            reason: "no templates".into(),
        });
    }
    for t in templates {
        t.validate_for(spec)?;
    }
    let k = match spec.answer_format {
        super::tasks::AnswerFormat::Mcq { k } => k,
        _ => 0,
    };
    let mut ordered: Vec<&Record> = records.iter().collect();
    ordered.sort_by(|a, b| a.image.image_id.cmp(&b.image.image_id));
    let mut studies: BTreeMap<&str, &Record> = BTreeMap::new();
    for r in &ordered {
        studies.entry(r.image.study_id.as_str()).or_insert(r);
    }

    let results: Vec<Result<CompiledSample, SkipEntry>> = ordered
        .par_iter()
        .map(|record| {
            let id = &record.image.image_id;
            let skip = |reason: String| SkipEntry {
                image_id: id.clone(),
                reason,
            };
            if let Some(missing) = spec
                .required_annotations
                .iter()
                .find(|kind| !has_annotation(record, **kind))
            {
                return Err(skip(format!("missing {missing:?}").to_lowercase()));
            }
            let mut rng = rng_for(seed, &[&spec.task_id, id]);
            let template = templates.choose(&mut rng).expect("non-empty");
            let built = build(spec.kind, k, record, &studies, &mut rng).map_err(skip)?;
            let values: Vec<(&str, &str)> =
                built.values.iter().map(|(k, v)| (*k, v.as_str())).collect();
            let images = if spec.kind.image_count() == 0 {
                Vec::new()
            } else {
                built.images
            };
            if built.response.trim().is_empty() {
                return Err(skip("empty response".into()));
            }
            Ok(CompiledSample {
                record_id: id.clone(),
                triplet: Triplet {
                    instruction: template.render(&values),
                    images,
                    response: built.response,
                    task_id: spec.task_id.clone(),
                    source_id: record.image.source_id.clone(),
                    split: record.image.split,
                },
                options: built.options,
                answer: built.answer,
            })
        })
        .collect();

    let mut samples = Vec::new();
    let mut log = CompileLog::default();
    for r in results {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => log.skipped.push(e),
        }
    }
    Ok((samples, log))
}

/// Compiles one task into triplets.
pub fn compile_task(
    spec: &TaskSpec,
    records: &[Record],
    templates: &[InstructionTemplate],
    seed: u64,
) -> Result<(Vec<Triplet>, CompileLog), CorpusError> {
    let (samples, log) = compile_samples(spec, records, templates, seed)?;
    Ok((samples.into_iter().map(|s| s.triplet).collect(), log))
}

impl TaskRegistry {
    pub fn compile(
        &self,
        task_id: &str,
        records: &[Record],
        seed: u64,
    ) -> Result<(Vec<Triplet>, CompileLog), CorpusError> {
        compile_task(self.spec(task_id)?, records, self.templates(task_id)?, seed)
    }

    pub fn compile_samples(
        &self,
        task_id: &str,
        records: &[Record],
        seed: u64,
    ) -> Result<(Vec<CompiledSample>, CompileLog), CorpusError> {
        compile_samples(self.spec(task_id)?, records, self.templates(task_id)?, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tasks::default_registry;
    use crate::corpus::types::{Annotation, ImageRecord, PriorStudy, QaPair, Split};

    fn record(id: &str, study: &str, split: Split) -> Record {
        Record {
            image: ImageRecord {
                image_id: id.into(),
                patient_id: "p1".into(),
                study_id: study.into(),
                view: View::PA,
                pixels_ref: format!("{id}.png"),
                source_id: "fixture".into(),
                split,
            },
            annotation: Annotation::default(),
        }
    }

    fn rich(id: &str) -> Record {
        let mut r = record(id, &format!("s-{id}"), Split::Train);
        for f in Finding::ALL {
            r.annotation.labels.insert(f, LabelValue::Absent);
        }
        r.annotation.labels.insert(Finding::PleuralEffusion, LabelValue::Present);
        r.annotation.labels.insert(Finding::Pneumothorax, LabelValue::Present);
        r.annotation.sections.findings =
            "PA view. There is a mild left pleural effusion. There is a severe right pneumothorax.".into();
        r.annotation.sections.impression = "Left effusion. Right pneumothorax.".into();
        r.annotation
            .boxes
            .insert("left pleural effusion".into(), vec![BBox::new(60, 70, 90, 90).unwrap()]);
        r.annotation.qa.push(QaPair {
            question: "Is there a pneumothorax?".into(),
            answer: "yes".into(),
        });
        r
    }

    #[test]
    fn summarization_is_text_only() {
        let reg = default_registry();
        let (t, _) = reg.compile("findings_summarization", &[rich("a")], 1).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t[0].images.is_empty());
        assert!(t[0].instruction.contains("mild left pleural effusion"));
        assert_eq!(t[0].response, "Left effusion. Right pneumothorax.");
    }

    #[test]
    fn temporal_without_prior_is_skipped() {
        let reg = default_registry();
        let (t, log) = reg.compile("temporal", &[rich("a")], 1).unwrap();
        assert!(t.is_empty());
        assert_eq!(log.skipped.len(), 1);
        assert_eq!(log.skipped[0].reason, "missing prior");
    }

    #[test]
    fn temporal_pairs_two_images_in_order() {
        let reg = default_registry();
        let prior = record("a0", "s0", Split::Train);
        let mut cur = record("a1", "s1", Split::Train);
        cur.annotation.prior = Some(PriorStudy {
            study_id: "s0".into(),
            progression: [(Finding::Edema, Progression::Worsened)].into_iter().collect(),
        });
        let (t, _) = reg.compile("temporal", &[cur.clone(), prior.clone()], 3).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].images, vec!["a0", "a1"]);
        assert_eq!(t[0].response, "worsened");
        assert!(t[0].instruction.contains("edema"));

        let mut other_split = prior;
        other_split.image.split = Split::Test;
        let (t, log) = reg.compile("temporal", &[cur, other_split], 3).unwrap();
        assert!(t.is_empty());
        let cur_skip = log.skipped.iter().find(|s| s.image_id == "a1").unwrap();
        assert_eq!(cur_skip.reason, "prior split mismatch");
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let reg = default_registry();
        let recs: Vec<Record> = (0..20).map(|i| rich(&format!("r{i:02}"))).collect();
        for task in reg.task_ids() {
            let a = reg.compile(task, &recs, 42).unwrap().0;
            let b = reg.compile(task, &recs, 42).unwrap().0;
            assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        }
        let mut reversed = recs.clone();
        reversed.reverse();
        assert_eq!(
            reg.compile("disease_binary", &recs, 42).unwrap().0,
            reg.compile("disease_binary", &reversed, 42).unwrap().0
        );
    }

    #[test]
    fn unknown_task() {
        let reg = default_registry();
        assert!(matches!(reg.compile("nope", &[], 1), Err(CorpusError::UnknownTask(_))));
    }

    #[test]
    fn every_task_builds_from_a_rich_record() {
        let reg = default_registry();
        for task in reg.task_ids().filter(|t| *t != "temporal" && *t != "disease_single") {
            let (samples, log) = reg.compile_samples(task, &[rich("a")], 9).unwrap();
            assert_eq!(samples.len(), 1, "{task}: {log:?}");
            let s = &samples[0];
            assert_eq!(s.triplet.split, Split::Train);
            if let (Some(opts), SampleAnswer::Option(i)) = (&s.options, &s.answer) {
                assert_eq!(opts[*i], s.triplet.response);
            }
        }
    }

    #[test]
    fn finegrained_options_differ_by_one_word() {
        let reg = default_registry();
        for seed in 0..10 {
            let (samples, _) = reg.compile_samples("finegrained", &[rich("a")], seed).unwrap();
            let opts = samples[0].options.clone().unwrap();
            let a: Vec<&str> = opts[0].split(' ').collect();
            let b: Vec<&str> = opts[1].split(' ').collect();
            assert_eq!(a.len(), b.len());
            assert_eq!(a.iter().zip(&b).filter(|(x, y)| x != y).count(), 1, "{opts:?}");
        }
    }

    #[test]
    fn attributes_skip_negated_sentences() {
        let text = "No left pleural effusion. There is a severe right pneumothorax.";
        assert_eq!(finding_attributes(text, Finding::PleuralEffusion), (None, None));
        assert_eq!(
            finding_attributes(text, Finding::Pneumothorax),
            (Some("right"), Some("severe"))
        );
    }

    #[test]
    fn multi_disease_options() {
        let reg = default_registry();
        let (s, _) = reg.compile_samples("disease_multi", &[rich("a")], 5).unwrap();
        let s = &s[0];
        assert_eq!(s.triplet.response, "pleural effusion, pneumothorax");
        assert_eq!(s.options.as_ref().unwrap().len(), 4);
    }
}
