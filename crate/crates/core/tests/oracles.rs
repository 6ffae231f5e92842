//! Randomized comparisons against the independent oracles in `common`.

mod common;

use kgqa_core::kg::parse_query;
use kgqa_core::matching::{Direction, LinkingMaps, PredicateOption};
use kgqa_core::model::{Qir, QuestionForm, Triple};
use kgqa_core::planning;
use proptest::prelude::*;

#[test]
fn embedded_store_matches_nested_loop_oracle() {
    assert_eq!(common::sparql_oracle_run(7, 100, 30), Ok(3000));
}

#[test]
fn random_queries_survive_text_round_trip() {
    let mut rng = common::rng(11);
    for _ in 0..500 {
        let q = common::random_query(&mut rng);
        let text = q.to_string();
        assert_eq!(parse_query(&text).unwrap(), q, "{text}");
    }
}

#[test]
fn generation_matches_recursive_enumeration() {
    assert_eq!(common::generation_oracle_run(3, 200), Ok(200));
}

#[test]
fn two_by_three_gives_six() {
    let qir = Qir::from_facts(
        vec![Triple::new("A", "r", "?x"), Triple::new("?x", "s", "B")],
        QuestionForm::List,
        None,
    )
    .unwrap();
    let opts = |prefix: &str, n: usize| -> Vec<PredicateOption> {
        (0..n)
            .map(|k| PredicateOption {
                iri: format!("http://x/{prefix}{k}"),
                score: 0.0,
                direction: Direction::Forward,
            })
            .collect()
    };
    let maps = LinkingMaps {
        ent_to_vertex: [("A", "http://x/A"), ("B", "http://x/B")]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect(),
        fact_predicates: vec![opts("p", 2), opts("q", 3)],
        ..Default::default()
    };
    let case = common::GenCase { qir, maps };
    assert_eq!(planning::generate(&case.qir, &case.maps).unwrap().len(), 6);
    assert_eq!(common::enumerate_oracle(&case).len(), 6);

    // 5 x 10 = 50 candidates, truncated to the default budget of 40.
    let mut big = case;
    big.maps.fact_predicates = vec![opts("p", 5), opts("q", 10)];
    let all = planning::generate(&big.qir, &big.maps).unwrap();
    assert_eq!(all.len(), 50);
    let kept = planning::truncate(all.clone(), 40);
    assert_eq!(kept.len(), 40);
    assert!(common::truncation_is_minimal(&all, 40));
}

proptest! {
    #[test]
    fn truncation_keeps_minimal_costs(seed in any::<u64>(), k in 1usize..60) {
        let mut rng = common::rng(seed);
        let case = common::random_gen_case(&mut rng, 4, 4);
        let all = planning::generate(&case.qir, &case.maps).unwrap();
        prop_assert!(common::truncation_is_minimal(&all, k));
    }

    #[test]
    fn truncation_is_deterministic(seed in any::<u64>(), k in 1usize..20) {
        let mut rng = common::rng(seed);
        let case = common::random_gen_case(&mut rng, 3, 4);
        let mut all = planning::generate(&case.qir, &case.maps).unwrap();
        let a = planning::truncate(all.clone(), k);
        all.reverse();
        prop_assert_eq!(a, planning::truncate(all, k));
    }
}
