use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BenchError, EvalResult, EvalTask};
use crate::metrics::{paired_t, MetricsError};

/// Best versus second-best model on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub task: EvalTask,
    pub best: String,
    pub second: String,
    pub best_point: f64,
    pub second_point: f64,
    /// `None` when the per-item differences have no variance.
    pub p_value: Option<f64>,
    /// "significant", "not significant" or "tie".
    pub outcome: String,
}

/// Paired comparison of two results over the same items.
pub fn compare(a: &EvalResult, b: &EvalResult) -> Result<Comparison, BenchError> {
    if a.task != b.task {
        return Err(BenchError::Mismatch(format!("tasks {} and {}", a.task, b.task)));
    }
    let ids = |r: &EvalResult| r.rows.iter().map(|x| x.item_id.clone()).collect::<Vec<_>>();
    if ids(a) != ids(b) {
        return Err(BenchError::Mismatch(format!(
            "{} and {} were run on different items for {}",
            a.model, b.model, a.task
        )));
    }
    let (best, second) = if a.aggregate.point >= b.aggregate.point { (a, b) } else { (b, a) };
    let (p_value, outcome) = match paired_t(&best.scores(), &second.scores()) {
        Ok(p) => (Some(p), if p < 0.05 { "significant" } else { "not significant" }),
        Err(MetricsError::Degenerate(_)) => (None, "tie"),
        Err(e) => return Err(e.into()),
    };
    Ok(Comparison {
        task: a.task,
        best: best.model.clone(),
        second: second.model.clone(),
        best_point: best.aggregate.point,
        second_point: second.aggregate.point,
        p_value,
        outcome: outcome.to_string(),
    })
}

#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub item_files: Vec<PathBuf>,
    pub summary: PathBuf,
    pub metrics: PathBuf,
    pub comparisons: PathBuf,
    pub plot: PathBuf,
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes per-item rows, the summary table, best-vs-second comparisons and
/// plot data under `dir`.
pub fn write_report(results: &[EvalResult], dir: &Path) -> Result<ReportFiles, BenchError> {
    if results.is_empty() {
        return Err(BenchError::NoResults);
    }
    fs::create_dir_all(dir)?;
    let mut item_files = Vec::new();
    for r in results {
        let sub = dir.join("items").join(file_safe(&r.model));
        fs::create_dir_all(&sub)?;
        let path = sub.join(format!("{}.jsonl", r.task));
        let mut w = BufWriter::new(fs::File::create(&path)?);
        for row in &r.rows {
            serde_json::to_writer(&mut w, row)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        item_files.push(path);
    }

    let summary = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary)?;
    w.write_record(["model", "task", "n", "point", "lo", "hi", "resamples", "seed"])?;
    for r in results {
        let a = &r.aggregate;
        w.write_record([
            r.model.clone(),
            r.task.to_string(),
            r.rows.len().to_string(),
            a.point.to_string(),
            a.lo.to_string(),
            a.hi.to_string(),
            a.resamples.to_string(),
            a.seed.to_string(),
        ])?;
    }
    w.flush()?;

    let metrics = dir.join("metrics.csv");
    let mut w = csv::Writer::from_path(&metrics)?;
    w.write_record(["model", "task", "metric", "value"])?;
    for r in results {
        for (k, v) in &r.extras {
            w.write_record([r.model.clone(), r.task.to_string(), k.clone(), v.to_string()])?;
        }
    }
    w.flush()?;

    let mut by_task: BTreeMap<EvalTask, Vec<&EvalResult>> = BTreeMap::new();
    for r in results {
        by_task.entry(r.task).or_default().push(r);
    }
    let comparisons = dir.join("comparisons.csv");
    let mut w = csv::Writer::from_path(&comparisons)?;
    w.write_record(["task", "best", "second", "best_point", "second_point", "p_value", "outcome"])?;
    for group in by_task.values_mut() {
        if group.len() < 2 {
            continue;
        }
        group.sort_by(|a, b| b.aggregate.point.total_cmp(&a.aggregate.point).then(a.model.cmp(&b.model)));
        let c = compare(group[0], group[1])?;
        w.write_record([
            c.task.to_string(),
            c.best,
            c.second,
            c.best_point.to_string(),
            c.second_point.to_string(),
            c.p_value.map(|p| p.to_string()).unwrap_or_default(),
            c.outcome,
        ])?;
    }
    w.flush()?;

    let bars: Vec<_> = results
        .iter()
        .map(|r| {
            json!({
                "model": r.model,
                "task": r.task,
                "point": r.aggregate.point,
                "lo": r.aggregate.lo,
                "hi": r.aggregate.hi,
                "n": r.rows.len(),
            })
        })
        .collect();
    let grounding: BTreeMap<&str, Vec<f64>> = results
        .iter()
        .filter(|r| r.task == EvalTask::Grounding)
        .map(|r| (r.model.as_str(), r.scores()))
        .collect();
    let plot = dir.join("plot.json");
    fs::write(
        &plot,
        serde_json::to_string_pretty(&json!({ "bars": bars, "grounding_iou": grounding }))?,
    )?;
    Ok(ReportFiles {
        item_files,
        summary,
        metrics,
        comparisons,
        plot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{run_task, Generator, GeneratorError, Oracle, RunConfig};
    use crate::bench::EvalItem;
    use crate::corpus::SampleAnswer;
    use crate::BBox;

    fn items(task: EvalTask, n: usize) -> Vec<EvalItem> {
        (0..n)
            .map(|i| EvalItem {
                id: format!("{task}-{i:02}"),
                task,
                instruction: format!("q{i} (A) Yes (B) No"),
                images: vec![format!("img{i}")],
                options: task.is_mcq().then(|| vec!["Yes".to_string(), "No".to_string()]),
                answer: if task.is_mcq() {
                    SampleAnswer::Option(i % 2)
                } else {
                    SampleAnswer::Box(BBox::new(10, 10, 20 + i as i32, 30).unwrap())
                },
            })
            .collect()
    }

    struct Always(&'static str);
    impl Generator for Always {
        fn name(&self) -> &str {
            self.0
        }
        fn generate(&self, _: &[String], _: &str) -> Result<String, GeneratorError> {
            Ok(self.0.into())
        }
    }

    #[test]
    fn identical_results_are_a_tie() {
        let it = items(EvalTask::DiseaseBinary, 10);
        let r = run_task(&Oracle::new(&it, None), EvalTask::DiseaseBinary, &it, RunConfig::default()).unwrap();
        let c = compare(&r, &r).unwrap();
        assert_eq!(c.outcome, "tie");
        assert_eq!(c.p_value, None);
    }

    #[test]
    fn mismatched_items_error() {
        let a = items(EvalTask::DiseaseBinary, 10);
        let b = items(EvalTask::DiseaseBinary, 8);
        let ra = run_task(&Always("Yes"), EvalTask::DiseaseBinary, &a, RunConfig::default()).unwrap();
        let rb = run_task(&Always("Yes"), EvalTask::DiseaseBinary, &b, RunConfig::default()).unwrap();
        assert!(matches!(compare(&ra, &rb), Err(BenchError::Mismatch(_))));
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        let mcq = items(EvalTask::DiseaseBinary, 10);
        let grd = items(EvalTask::Grounding, 6);
        let cfg = RunConfig::default();
        let results = vec![
            run_task(&Oracle::new(&mcq, None), EvalTask::DiseaseBinary, &mcq, cfg).unwrap(),
            run_task(&Always("Yes"), EvalTask::DiseaseBinary, &mcq, cfg).unwrap(),
            run_task(&Oracle::new(&grd, None), EvalTask::Grounding, &grd, cfg).unwrap(),
        ];
        let files = write_report(&results, dir.path()).unwrap();
        let summary = fs::read_to_string(&files.summary).unwrap();
        assert_eq!(summary.lines().count(), 4);
        assert!(summary.contains("oracle,disease_binary,10,1,"));
        assert!(summary.contains(",1000,"));
        let cmp = fs::read_to_string(&files.comparisons).unwrap();
        assert!(cmp.lines().nth(1).unwrap().starts_with("disease_binary,oracle,Yes,"));
        let plot: serde_json::Value = serde_json::from_str(&fs::read_to_string(&files.plot).unwrap()).unwrap();
        assert_eq!(plot["grounding_iou"]["oracle"].as_array().unwrap().len(), 6);
        assert!(write_report(&[], dir.path()).is_err());
    }
}
