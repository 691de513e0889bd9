//! Harness soundness on a synthetic test split.

use cxr_core::bench::{build_eval_set, run_task, write_report, EvalItem, EvalTask, Oracle, RunConfig};
use cxr_core::corpus::synth::{synth_generate, SynthConfig};
use cxr_core::corpus::{default_registry, CompiledSample};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn test_items(task: EvalTask) -> Vec<EvalItem> {
    let out = synth_generate(&SynthConfig {
        n_images: 600,
        split_fractions: [0.0, 0.0, 1.0],
        seed: 12,
        ..Default::default()
    })
    .unwrap();
    let samples: Vec<CompiledSample> = default_registry()
        .compile_samples(task.kind().default_id(), &out.records(), 4)
        .unwrap()
        .0;
    build_eval_set(task, &samples, 9, None).unwrap()
}

#[test]
fn oracle_is_perfect_on_every_task() {
    for task in EvalTask::ALL {
        let items = test_items(task);
        assert!(!items.is_empty(), "{task}");
        let r = run_task(&Oracle::new(&items, None), task, &items, RunConfig::default()).unwrap();
        assert_eq!(r.aggregate.point, 1.0, "{task}");
        assert!(r.rows.iter().all(|row| row.score == 1.0), "{task}");
        let (agg, extras) = r.recompute().unwrap();
        assert_eq!(agg, r.aggregate);
        assert_eq!(extras, r.extras);
        if task == EvalTask::Grounding {
            assert_eq!(r.extras["mean_iou"], 1.0);
        }
    }
}

#[test]
fn option_order_does_not_matter_to_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for task in EvalTask::ALL.into_iter().filter(|t| t.is_mcq()) {
        let shuffled: Vec<EvalItem> = test_items(task)
            .iter()
            .map(|item| {
                let mut perm: Vec<usize> = (0..item.options.as_ref().unwrap().len()).collect();
                perm.shuffle(&mut rng);
                item.permute_options(&perm).unwrap()
            })
            .collect();
        let r = run_task(&Oracle::new(&shuffled, None), task, &shuffled, RunConfig::default()).unwrap();
        assert_eq!(r.aggregate.point, 1.0, "{task}");
    }
}

#[test]
fn corrupted_oracle_scores_point_nine() {
    let items = test_items(EvalTask::DiseaseBinary);
    assert!(items.len() >= 100);
    let r = run_task(&Oracle::new(&items, Some(10)), EvalTask::DiseaseBinary, &items, RunConfig::default())
        .unwrap();
    assert!((r.aggregate.point - 0.9).abs() <= 0.02, "{}", r.aggregate.point);
}

#[test]
fn report_round_trips_rows() {
    let dir = tempfile::tempdir().unwrap();
    let items = test_items(EvalTask::Grounding);
    let r = run_task(&Oracle::new(&items, None), EvalTask::Grounding, &items, RunConfig::default()).unwrap();
    let files = write_report(std::slice::from_ref(&r), dir.path()).unwrap();
    let text = std::fs::read_to_string(&files.item_files[0]).unwrap();
    assert_eq!(text.lines().count(), items.len());
    let plot: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&files.plot).unwrap()).unwrap();
    assert_eq!(plot["grounding_iou"]["oracle"].as_array().unwrap().len(), items.len());
}
