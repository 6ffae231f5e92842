mod common;

use kgqa_core::eval::{retention, run_benchmark, score_ranked, score_set, EvalMode, MetricReport};
use kgqa_core::{desk, Answer};
use proptest::prelude::*;

#[test]
fn hand_computed_cases() {
    let cases = common::metric_cases();
    assert!(cases.len() >= 10);
    for (i, (pred, gold, set, ranked)) in cases.iter().enumerate() {
        let s = score_set(pred, gold);
        let r = score_ranked(pred, gold);
        for (got, want) in [s.precision, s.recall, s.f1].iter().zip(set) {
            assert!((got - want).abs() < 1e-9, "case {i}: set {s:?} vs {set:?}");
        }
        for (got, want) in [r.p_at_1, r.mrr, r.hit_at_5].iter().zip(ranked) {
            assert!((got - want).abs() < 1e-9, "case {i}: ranked {r:?} vs {ranked:?}");
        }
    }
}

#[test]
fn two_of_three_rounds_to_published_precision() {
    let s = score_set(&common::answers(&["a", "b", "d"]), &common::answers(&["a", "b", "c"]));
    assert!((s.f1 - 0.6667).abs() < 1e-4);
}

#[test]
fn empty_benchmark_gives_empty_report() {
    let report = run_benchmark(&desk::engine(), &[], EvalMode::Single);
    assert!(report.items.is_empty());
    assert_eq!(report.aggregate.items, 0);
    assert_eq!(report.aggregate.f1, 0.0);
    assert!(report.to_table().contains("aggregate"));
}

#[test]
fn perturbed_gold_lowers_the_mean_by_one_item() {
    let engine = desk::engine();
    let mut items = desk::single_items();
    items.extend(desk::dialogue_items());
    let single = run_benchmark(&engine, &items[..6], EvalMode::Single);
    let dialogue = run_benchmark(&engine, &items[6..], EvalMode::Dialogue);
    let mut all = single.items.clone();
    all.extend(dialogue.items.clone());
    let clean = MetricReport::new(EvalMode::Single, all);
    assert_eq!(clean.aggregate.f1, 1.0);

    items[1].gold_answers = vec![Answer::literal("Nowhere")];
    let perturbed = run_benchmark(&engine, &items[..6], EvalMode::Single);
    let mut all = perturbed.items.clone();
    all.extend(dialogue.items);
    let report = MetricReport::new(EvalMode::Single, all);
    assert!((report.aggregate.f1 - 11.0 / 12.0).abs() < 1e-12);
    assert_eq!(report.aggregate.failed, 1);
    assert_eq!(report.items[1].failure, Some(kgqa_core::eval::FailureStage::Selection));
}

#[test]
fn retention_of_equal_runs_is_full() {
    assert_eq!(retention(1.0, 1.0), Some(100.0));
}

fn answer_strategy() -> impl Strategy<Value = Answer> {
    prop_oneof![
        "[a-c]{1,2}".prop_map(Answer::literal),
        (0u64..5).prop_map(Answer::count),
        "[a-c]".prop_map(|s| Answer::entity(format!("http://x/{s}")).unwrap()),
    ]
}

proptest! {
    #[test]
    fn metrics_stay_in_unit_interval(pred in prop::collection::vec(answer_strategy(), 0..6),
                                     gold in prop::collection::vec(answer_strategy(), 0..6)) {
        let s = score_set(&pred, &gold);
        let r = score_ranked(&pred, &gold);
        for v in [s.precision, s.recall, s.f1, r.p_at_1, r.mrr, r.hit_at_5] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let expected_f1 = if s.precision + s.recall == 0.0 { 0.0 } else { 2.0 * s.precision * s.recall / (s.precision + s.recall) };
        prop_assert!((s.f1 - expected_f1).abs() < 1e-12);
    }

    #[test]
    fn set_metrics_ignore_order(mut pred in prop::collection::vec(answer_strategy(), 0..6),
                                gold in prop::collection::vec(answer_strategy(), 0..6)) {
        let before = score_set(&pred, &gold);
        pred.reverse();
        prop_assert_eq!(before, score_set(&pred, &gold));
    }
}
