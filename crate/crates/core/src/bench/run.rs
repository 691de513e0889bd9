use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BenchError, EvalItem, EvalTask};
use crate::corpus::SampleAnswer;
use crate::metrics::{
    accuracy_ci, iou, label_extract, label_f1, map_at_thresholds, match_option, mean_ci, mean_iou,
    parse_box, rouge_l, CIResult, F1Variant, DEFAULT_IOU_THRESHOLDS, DEFAULT_RESAMPLES,
};

pub type GeneratorError = Box<dyn std::error::Error + Send + Sync>;

/// Anything that answers an instruction about zero or more images.
pub trait Generator: Sync {
    fn name(&self) -> &str;
    fn generate(&self, images: &[String], instruction: &str) -> Result<String, GeneratorError>;
}

/// Answers every item with its ground truth, optionally corrupting every
/// `corrupt_every`-th item (by id order) with a wrong answer.
pub struct Oracle {
    name: String,
    answers: BTreeMap<(Vec<String>, String), String>,
}

impl Oracle {
    pub fn new(items: &[EvalItem], corrupt_every: Option<usize>) -> Self {
        let mut sorted: Vec<&EvalItem> = items.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        let answers = sorted
            .iter()
            .enumerate()
            .map(|(i, item)| {
                let corrupt = corrupt_every.is_some_and(|k| k > 0 && i % k == k - 1);
                let text = if corrupt { wrong_answer(item) } else { item.reference() };
                ((item.images.clone(), item.instruction.clone()), text)
            })
            .collect();
        Self {
            name: match corrupt_every {
                Some(k) => format!("oracle-corrupt-{k}"),
                None => "oracle".into(),
            },
            answers,
        }
    }
}

fn wrong_answer(item: &EvalItem) -> String {
    match (&item.answer, &item.options) {
        (SampleAnswer::Option(i), Some(opts)) => opts[(i + 1) % opts.len()].clone(),
        (SampleAnswer::Box(_), _) => "no box".into(),
        _ => String::new(),
    }
}

impl Generator for Oracle {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, images: &[String], instruction: &str) -> Result<String, GeneratorError> {
        self.answers
            .get(&(images.to_vec(), instruction.to_string()))
            .cloned()
            .ok_or_else(|| "unknown item".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            resamples: DEFAULT_RESAMPLES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRow {
    pub item_id: String,
    pub response: Option<String>,
    pub error: Option<String>,
    /// Option index, box text or generated text, whichever the task parses.
    pub parsed: Option<String>,
    pub reference: String,
    /// 0/1 for multiple choice, IOU for grounding, ROUGE-L for generation.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub model: String,
    pub task: EvalTask,
    pub rows: Vec<ItemRow>,
    pub aggregate: CIResult,
    /// Task-specific corpus-level metrics (mAP, label F1 variants).
    pub extras: BTreeMap<String, f64>,
}

fn score_item(item: &EvalItem, response: &Result<String, String>) -> (Option<String>, f64) {
    let Ok(text) = response else {
        return (None, 0.0);
    };
    match (&item.answer, &item.options) {
        (SampleAnswer::Option(ans), Some(opts)) => match match_option(text, opts) {
            Some(i) => (Some(i.to_string()), f64::from(u8::from(i == *ans))),
            None => (None, 0.0),
        },
        (SampleAnswer::Box(truth), _) => match parse_box(text) {
            Some(b) => (Some(b.to_text()), iou(&b, truth)),
            None => (None, 0.0),
        },
        (SampleAnswer::Text(reference), _) => (Some(text.clone()), rouge_l(text, reference)),
        (SampleAnswer::Option(_), None) => (None, 0.0),
    }
}

/// Aggregates from per-item rows; used both when running and when checking
/// emitted results.
pub(crate) fn aggregate(
    task: EvalTask,
    rows: &[ItemRow],
    cfg: RunConfig,
) -> Result<(CIResult, BTreeMap<String, f64>), BenchError> {
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let mut extras = BTreeMap::new();
    let ci = if task.is_mcq() {
        let correct: Vec<bool> = scores.iter().map(|s| *s == 1.0).collect();
        accuracy_ci(&correct, cfg.resamples, cfg.seed)?
    } else {
        mean_ci(&scores, cfg.resamples, cfg.seed)?
    };
    if task == EvalTask::Grounding {
        extras.insert("mean_iou".into(), mean_iou(&scores)?);
        extras.insert("map".into(), map_at_thresholds(&scores, &DEFAULT_IOU_THRESHOLDS)?);
    } else if !task.is_mcq() {
        let preds: Vec<_> = rows
            .iter()
            .map(|r| label_extract(r.response.as_deref().unwrap_or("")))
            .collect();
        let refs: Vec<_> = rows.iter().map(|r| label_extract(&r.reference)).collect();
        for v in F1Variant::ALL {
            let key = serde_json::to_value(v)?.as_str().unwrap_or_default().to_string();
            extras.insert(format!("label_f1_{key}"), label_f1(&preds, &refs, v)?);
        }
    }
    Ok((ci, extras))
}

/// Runs `model` over `items`. A failed generation scores zero and is
/// recorded in its row; the run continues.
pub fn run_task(
    model: &dyn Generator,
    task: EvalTask,
    items: &[EvalItem],
    cfg: RunConfig,
) -> Result<EvalResult, BenchError> {
    let mut rows: Vec<ItemRow> = items
        .par_iter()
        .map(|item| {
            let response = model
                .generate(&item.images, &item.instruction)
                .map_err(|e| e.to_string());
            let (parsed, score) = score_item(item, &response);
            ItemRow {
                item_id: item.id.clone(),
                parsed,
                score,
                reference: item.reference(),
                error: response.as_ref().err().cloned(),
                response: response.ok(),
            }
        })
        .collect();
    rows.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    let (aggregate, extras) = aggregate(task, &rows, cfg)?;
    Ok(EvalResult {
        model: model.name().to_string(),
        task,
        rows,
        aggregate,
        extras,
    })
}

impl EvalResult {
    /// Recomputes the aggregate from the rows with the stored resampling
    /// parameters.
    pub fn recompute(&self) -> Result<(CIResult, BTreeMap<String, f64>), BenchError> {
        aggregate(
            self.task,
            &self.rows,
            RunConfig {
                resamples: self.aggregate.resamples,
                seed: self.aggregate.seed,
            },
        )
    }

    pub fn scores(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.score).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::BBox;

    fn mcq(id: &str, opts: &[&str], ans: usize) -> EvalItem {
        EvalItem {
            id: id.into(),
            task: EvalTask::View,
            instruction: format!("Which view? {id}"),
            images: vec![id.into()],
            options: Some(opts.iter().map(|s| s.to_string()).collect()),
            answer: SampleAnswer::Option(ans),
        }
    }

    struct Fixed(&'static str);
    impl Generator for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn generate(&self, _: &[String], _: &str) -> Result<String, GeneratorError> {
            Ok(self.0.into())
        }
    }

    struct Failing;
    impl Generator for Failing {
        fn name(&self) -> &str {
            "failing"
        }
        fn generate(&self, _: &[String], _: &str) -> Result<String, GeneratorError> {
            Err("boom".into())
        }
    }

    #[test]
    fn oracle_scores_one() {
        let items: Vec<_> = (0..10).map(|i| mcq(&format!("i{i}"), &["AP", "PA", "lateral"], i % 3)).collect();
        let r = run_task(&Oracle::new(&items, None), EvalTask::View, &items, RunConfig::default()).unwrap();
        assert_eq!(r.aggregate.point, 1.0);
        assert_eq!(r.recompute().unwrap().0, r.aggregate);
    }

    #[test]
    fn verbatim_options_resolve_deterministically() {
        let items = vec![mcq("a", &["left pleural effusion", "pleural effusion"], 0)];
        let r = run_task(
            &Fixed("left pleural effusion or pleural effusion"),
            EvalTask::View,
            &items,
            RunConfig::default(),
        )
        .unwrap();
        assert_eq!(r.rows[0].parsed.as_deref(), Some("0"));
    }

    #[test]
    fn failures_score_zero_and_continue() {
        let items: Vec<_> = (0..3).map(|i| mcq(&format!("i{i}"), &["Yes", "No"], 0)).collect();
        let r = run_task(&Failing, EvalTask::View, &items, RunConfig::default()).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert!(r.rows.iter().all(|row| row.score == 0.0 && row.error.is_some()));
    }

    #[test]
    fn missing_box_scores_zero() {
        let item = EvalItem {
            id: "g".into(),
            task: EvalTask::Grounding,
            instruction: "Locate it.".into(),
            images: vec!["g".into()],
            options: None,
            answer: SampleAnswer::Box(BBox::new(1, 1, 10, 10).unwrap()),
        };
        let r = run_task(&Fixed("nothing here"), EvalTask::Grounding, &[item], RunConfig::default()).unwrap();
        assert_eq!(r.rows[0].score, 0.0);
        assert_eq!(r.extras["mean_iou"], 0.0);
    }

    #[test]
    fn corrupted_oracle_misses_every_tenth() {
        let items: Vec<_> = (0..100).map(|i| mcq(&format!("i{i:03}"), &["Yes", "No"], i % 2)).collect();
        let r = run_task(&Oracle::new(&items, Some(10)), EvalTask::View, &items, RunConfig::default()).unwrap();
        assert!((r.aggregate.point - 0.9).abs() < 1e-12);
    }
}
