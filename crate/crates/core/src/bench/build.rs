use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use regex::Regex;

use super::{BenchError, EvalItem, EvalTask};
use crate::corpus::{CompiledSample, SampleAnswer, Split, Triplet};
use crate::metrics::parse_box;

/// How items are grouped before class balancing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalanceRule {
    /// Every distinct correct answer is a class; each is downsampled to the
    /// size of the smallest.
    ByAnswer,
    None,
}

impl BalanceRule {
    pub fn for_task(task: EvalTask) -> Self {
        match task {
            EvalTask::View
            | EvalTask::Temporal
            | EvalTask::DiseaseBinary
            | EvalTask::Vqa
            | EvalTask::Finegrained => BalanceRule::ByAnswer,
            _ => BalanceRule::None,
        }
    }
}

fn balance_class(item: &EvalItem) -> String {
    let text = item.reference();
    if item.task == EvalTask::Finegrained {
        // Classes are the distinguishing word (side or severity).
        text.split([' ', '-']).next().unwrap_or_default().to_string()
    } else {
        text
    }
}

/// Recovers options and the structured answer from a manifest triplet.
pub fn sample_from_triplet(t: &Triplet, task: EvalTask, id: &str) -> Result<CompiledSample, BenchError> {
    let bad = |reason: &str| BenchError::MalformedItem {
        id: id.to_string(),
        reason: reason.to_string(),
    };
    let (options, answer) = if task.is_mcq() {
        let start = t.instruction.rfind("(A) ").ok_or_else(|| bad("no rendered options"))?;
        let label = Regex::new(r"\s*\([A-Z]\)\s").expect("static regex");
        let opts: Vec<String> = label
            .split(&t.instruction[start..])
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        let idx = opts
            .iter()
            .position(|o| *o == t.response)
            .ok_or_else(|| bad("response is not one of the options"))?;
        (Some(opts), SampleAnswer::Option(idx))
    } else if task == EvalTask::Grounding {
        let b = parse_box(&t.response).ok_or_else(|| bad("response is not a box"))?;
        (None, SampleAnswer::Box(b))
    } else {
        (None, SampleAnswer::Text(t.response.clone()))
    };
    Ok(CompiledSample {
        record_id: id.to_string(),
        triplet: t.clone(),
        options,
        answer,
    })
}

/// Builds class-balanced evaluation items for one task.
///
/// Only samples of that task are used; any of them outside the test split is
/// an error. Item ids are `{task}-{record_id}`, and items come back sorted by
/// id.
pub fn build_eval_set(
    task: EvalTask,
    samples: &[CompiledSample],
    seed: u64,
    max_items: Option<usize>,
) -> Result<Vec<EvalItem>, BenchError> {
    let mut items = Vec::new();
    for s in samples.iter().filter(|s| EvalTask::from_kind_id(&s.triplet.task_id) == Some(task)) {
        if s.triplet.split != Split::Test {
            return Err(BenchError::NonTestRecord(s.record_id.clone()));
        }
        let item = EvalItem {
            id: format!("{}-{}", task.name(), s.record_id),
            task,
            instruction: s.triplet.instruction.clone(),
            images: s.triplet.images.clone(),
            options: s.options.clone(),
            answer: s.answer.clone(),
        };
        let consistent = match (&item.answer, &item.options) {
            (SampleAnswer::Option(i), Some(o)) => task.is_mcq() && *i < o.len(),
            (SampleAnswer::Box(_), None) => task == EvalTask::Grounding,
            (SampleAnswer::Text(_), None) => !task.is_mcq() && task != EvalTask::Grounding,
            _ => false,
        };
        if !consistent {
            return Err(BenchError::MalformedItem {
                id: item.id,
                reason: "answer does not match the task format".into(),
            });
        }
        items.push(item);
    }
    items.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if BalanceRule::for_task(task) == BalanceRule::ByAnswer && !items.is_empty() {
        let mut classes: BTreeMap<String, Vec<EvalItem>> = BTreeMap::new();
        for item in items {
            classes.entry(balance_class(&item)).or_default().push(item);
        }
        let smallest = classes.values().map(Vec::len).min().unwrap_or(0);
        let per_class = match max_items {
            Some(m) => smallest.min(m.div_ceil(classes.len())),
            None => smallest,
        };
        items = classes
            .into_values()
            .flat_map(|group| {
                group
                    .choose_multiple(&mut rng, per_class)
                    .cloned()
                    .collect::<Vec<_>>()
            })
            .collect();
        items.sort_by(|a, b| a.id.cmp(&b.id));
    } else if let Some(m) = max_items {
        if items.len() > m {
            items.shuffle(&mut rng);
            items.truncate(m);
            items.sort_by(|a, b| a.id.cmp(&b.id));
        }
    }
    Ok(items)
}

impl EvalTask {
    /// Maps a corpus task id (default ids of the shipped registry) to a bench
    /// task.
    pub fn from_kind_id(task_id: &str) -> Option<EvalTask> {
        EvalTask::ALL
            .into_iter()
            .find(|t| t.kind().default_id() == task_id)
    }
}
