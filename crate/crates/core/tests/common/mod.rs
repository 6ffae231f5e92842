//! Independent oracles and generators shared by the integration tests and
//! the acceptance gate.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use kgqa_core::kg::{ContainsFilter, PatternTerm, QueryForm, ResultSet, SparqlQuery, Term, TriplePattern, TripleStore};
use kgqa_core::llm::{Gateway, PromptLibrary, ScriptRule, ScriptedBackend};
use kgqa_core::matching::{select_vertex, validate_vertex, Direction, LinkingMaps, PredicateOption};
use kgqa_core::model::{Answer, Qir, QuestionForm, Triple};
use kgqa_core::planning::{self, validate_predicate_selection, CandidateQuery};
use kgqa_core::understanding::{classify, extract_qir, validate_triples};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- SPARQL

pub type Fact = (Term, Term, Term);

fn vocab_entity(i: usize) -> Term {
    Term::iri(format!("http://t.example/e{i}"))
}

fn vocab_predicate(i: usize) -> Term {
    Term::iri(format!("http://t.example/p{i}"))
}

fn vocab_literal(i: usize) -> Term {
    match i % 4 {
        0 => Term::literal("Alpha"),
        1 => Term::lang("beta gamma", "en"),
        2 => Term::typed("42", "http://www.w3.org/2001/XMLSchema#integer"),
        _ => Term::literal("delta Eta"),
    }
}

pub fn random_graph(rng: &mut ChaCha8Rng) -> Vec<Fact> {
    let n = rng.gen_range(3..=25);
    let mut facts = BTreeSet::new();
    for _ in 0..n {
        let s = vocab_entity(rng.gen_range(0..6));
        let p = vocab_predicate(rng.gen_range(0..4));
        let o = if rng.gen_bool(0.7) {
            vocab_entity(rng.gen_range(0..6))
        } else {
            vocab_literal(rng.gen_range(0..4))
        };
        facts.insert((s, p, o));
    }
    facts.into_iter().collect()
}

pub fn store_of(facts: &[Fact]) -> TripleStore {
    let mut store = TripleStore::new(&[]);
    for (s, p, o) in facts {
        store.insert(s.clone(), p.clone(), o.clone());
    }
    store
}

const VARS: [&str; 3] = ["a", "b", "c"];

fn random_position(rng: &mut ChaCha8Rng, kind: usize) -> PatternTerm {
    if rng.gen_bool(0.55) {
        return PatternTerm::var(VARS[rng.gen_range(0..VARS.len())]);
    }
    let absent = rng.gen_bool(0.05);
    let term = match (kind, absent) {
        (_, true) => Term::iri("http://t.example/absent"),
        (0, _) => vocab_entity(rng.gen_range(0..6)),
        (1, _) => vocab_predicate(rng.gen_range(0..4)),
        _ if rng.gen_bool(0.7) => vocab_entity(rng.gen_range(0..6)),
        _ => vocab_literal(rng.gen_range(0..4)),
    };
    PatternTerm::Const(term)
}

pub fn random_query(rng: &mut ChaCha8Rng) -> SparqlQuery {
    loop {
        let patterns: Vec<TriplePattern> = (0..rng.gen_range(1..=3))
            .map(|_| {
                TriplePattern::new(
                    random_position(rng, 0),
                    random_position(rng, 1),
                    random_position(rng, 2),
                )
            })
            .collect();
        let vars: Vec<String> = {
            let mut v: Vec<String> = patterns
                .iter()
                .flat_map(|p| p.terms())
                .filter_map(|t| t.as_var().map(str::to_string))
                .collect();
            v.sort();
            v.dedup();
            v
        };
        if vars.is_empty() {
            continue;
        }
        let mut query = match rng.gen_range(0..3) {
            0 => SparqlQuery::ask(patterns),
            1 => {
                let v = vars.choose(rng).unwrap();
                let mut q = SparqlQuery::count(v, patterns);
                q.distinct = rng.gen_bool(0.7);
                q
            }
            _ => {
                let mut proj: Vec<&str> = vars.iter().map(String::as_str).filter(|_| rng.gen_bool(0.6)).collect();
                if proj.is_empty() {
                    proj.push(&vars[0]);
                }
                let mut q = SparqlQuery::select(&proj, patterns);
                q.distinct = rng.gen_bool(0.7);
                if rng.gen_bool(0.3) {
                    q = q.with_limit(rng.gen_range(1..=5));
                }
                q
            }
        };
        if rng.gen_bool(0.3) {
            let token = ["al", "ta", "e", "zz", "4"].choose(rng).unwrap();
            query = query.with_filter(ContainsFilter::new(vars.choose(rng).unwrap(), token));
        }
        if query.validate().is_ok() {
            return query;
        }
    }
}

fn unify(binding: &BTreeMap<String, Term>, pattern: &PatternTerm, term: &Term) -> Option<BTreeMap<String, Term>> {
    match pattern {
        PatternTerm::Const(c) => (c == term).then(|| binding.clone()),
        PatternTerm::Var(v) => match binding.get(v) {
            Some(bound) => (bound == term).then(|| binding.clone()),
            None => {
                let mut next = binding.clone();
                next.insert(v.clone(), term.clone());
                Some(next)
            }
        },
    }
}

/// Nested-loop evaluation straight from the query semantics: every pattern
/// in written order is matched against every triple.
pub fn naive_eval(facts: &[Fact], query: &SparqlQuery) -> ResultSet {
    let mut solutions = vec![BTreeMap::new()];
    for pattern in &query.patterns {
        let mut next = Vec::new();
        for sol in &solutions {
            for (s, p, o) in facts {
                let extended = unify(sol, &pattern.subject, s)
                    .and_then(|b| unify(&b, &pattern.predicate, p))
                    .and_then(|b| unify(&b, &pattern.object, o));
                next.extend(extended);
            }
        }
        solutions = next;
    }
    solutions.retain(|sol| {
        query
            .filters
            .iter()
            .all(|f| sol.get(&f.var).is_some_and(|t| t.value().to_lowercase().contains(&f.token)))
    });
    match query.form {
        QueryForm::Ask => ResultSet::Boolean {
            value: !solutions.is_empty(),
        },
        QueryForm::SelectCount => {
            let var = &query.projection[0];
            let values: Vec<&Term> = solutions.iter().filter_map(|s| s.get(var)).collect();
            let value = if query.distinct {
                values.iter().collect::<BTreeSet<_>>().len()
            } else {
                values.len()
            };
            ResultSet::Count { value: value as u64 }
        }
        QueryForm::Select => {
            let mut rows: Vec<Vec<Term>> = solutions
                .iter()
                .map(|s| query.projection.iter().map(|v| s[v].clone()).collect())
                .collect();
            rows.sort();
            if query.distinct {
                rows.dedup();
            }
            if let Some(limit) = query.limit {
                rows.truncate(limit);
            }
            ResultSet::Rows {
                vars: query.projection.clone(),
                rows: rows
                    .into_iter()
                    .map(|r| query.projection.iter().cloned().zip(r).collect())
                    .collect(),
            }
        }
    }
}

/// Runs `graphs` random graphs with `queries` random queries each through the
/// store and the oracle; returns the first mismatch as text.
pub fn sparql_oracle_run(seed: u64, graphs: usize, queries: usize) -> Result<usize, String> {
    let mut rng = rng(seed);
    let mut checked = 0;
    for g in 0..graphs {
        let facts = random_graph(&mut rng);
        let store = store_of(&facts);
        for _ in 0..queries {
            let query = random_query(&mut rng);
            let got = store.evaluate(&query).map_err(|e| format!("graph {g}: {query}: {e}"))?;
            let want = naive_eval(&facts, &query);
            if got != want {
                return Err(format!("graph {g}: {query}\n store:  {got:?}\n oracle: {want:?}"));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

// ------------------------------------------------------------ generation

pub struct GenCase {
    pub qir: Qir,
    pub maps: LinkingMaps,
}

/// A QIR with 1..=`max_facts` facts, every fact touching an entity, and
/// 1..=`max_options` predicate options per fact.
pub fn random_gen_case(rng: &mut ChaCha8Rng, max_facts: usize, max_options: usize) -> GenCase {
    loop {
        let n = rng.gen_range(1..=max_facts);
        let mut facts = Vec::new();
        for i in 0..n {
            let entity = format!("E{}", rng.gen_range(0..3));
            let other = if rng.gen_bool(0.7) {
                format!("?v{}", rng.gen_range(0..3))
            } else {
                format!("E{}", rng.gen_range(0..3))
            };
            let rel = format!("r{i}");
            facts.push(if rng.gen_bool(0.5) {
                Triple::new(&entity, &rel, &other)
            } else {
                Triple::new(&other, &rel, &entity)
            });
        }
        let form = *[QuestionForm::List, QuestionForm::Count, QuestionForm::Boolean].choose(rng).unwrap();
        let Ok(qir) = Qir::from_facts(facts, form, None) else {
            continue;
        };
        let ent_to_vertex = qir
            .entities
            .iter()
            .map(|e| (e.clone(), format!("http://g.example/{e}")))
            .collect();
        let fact_predicates = (0..qir.facts.len())
            .map(|i| {
                (0..rng.gen_range(1..=max_options))
                    .map(|k| PredicateOption {
                        iri: format!("http://g.example/f{i}p{k}"),
                        score: 1.0 - k as f64 / 10.0,
                        direction: if rng.gen_bool(0.3) { Direction::Reversed } else { Direction::Forward },
                    })
                    .collect()
            })
            .collect();
        return GenCase {
            qir,
            maps: LinkingMaps {
                ent_to_vertex,
                fact_predicates,
                ..Default::default()
            },
        };
    }
}

fn endpoint(term: &str, maps: &LinkingMaps) -> String {
    match term.strip_prefix('?') {
        Some(v) => format!("?{v}"),
        None => format!("<{}>", maps.ent_to_vertex[term]),
    }
}

/// Expected candidates as `(choice indices, rank cost, query text)`, built by
/// recursion over facts and rendering each query by hand.
pub fn enumerate_oracle(case: &GenCase) -> Vec<(Vec<usize>, usize, String)> {
    fn go(case: &GenCase, i: usize, chosen: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, usize, String)>) {
        if i == case.qir.facts.len() {
            let mut body = String::new();
            for (f, &k) in chosen.iter().enumerate() {
                let fact = &case.qir.facts[f];
                let opt = &case.maps.fact_predicates[f][k];
                let s = endpoint(fact.subject.as_str(), &case.maps);
                let o = endpoint(fact.object.as_str(), &case.maps);
                let (s, o) = match opt.direction {
                    Direction::Forward => (s, o),
                    Direction::Reversed => (o, s),
                };
                body.push_str(&format!("{s} <{}> {o} . ", opt.iri));
            }
            let var = case.qir.answer_variable().unwrap_or_default();
            let text = match case.qir.form {
                QuestionForm::Boolean => format!("ASK WHERE {{ {body}}}"),
                QuestionForm::Count => format!("SELECT (COUNT(DISTINCT {var}) AS ?count) WHERE {{ {body}}}"),
                QuestionForm::List => format!("SELECT DISTINCT {var} WHERE {{ {body}}}"),
            };
            out.push((chosen.clone(), chosen.iter().sum(), text));
            return;
        }
        for k in 0..case.maps.fact_predicates[i].len() {
            chosen.push(k);
            go(case, i + 1, chosen, out);
            chosen.pop();
        }
    }
    let mut out = Vec::new();
    go(case, 0, &mut Vec::new(), &mut out);
    out
}

/// Compares `planning::generate` with the oracle on `cases` random QIRs.
pub fn generation_oracle_run(seed: u64, cases: usize) -> Result<usize, String> {
    let mut rng = rng(seed);
    for c in 0..cases {
        let case = random_gen_case(&mut rng, 4, 4);
        let got = planning::generate(&case.qir, &case.maps).map_err(|e| format!("case {c}: {e}"))?;
        let want = enumerate_oracle(&case);
        if got.len() != want.len() {
            return Err(format!("case {c}: {} candidates, oracle {}", got.len(), want.len()));
        }
        let mut got_rows: Vec<(Vec<usize>, usize, String)> = got
            .iter()
            .map(|cand| {
                let idx = cand
                    .origin
                    .iter()
                    .map(|o| {
                        case.maps.fact_predicates[o.fact]
                            .iter()
                            .position(|p| p.iri == o.iri)
                            .expect("origin predicate is an option")
                    })
                    .collect();
                (idx, cand.rank_cost, cand.query.to_string())
            })
            .collect();
        let mut want = want;
        got_rows.sort();
        want.sort();
        if got_rows != want {
            return Err(format!("case {c}: candidate sets differ\n got:  {got_rows:?}\n want: {want:?}"));
        }
    }
    Ok(cases)
}

/// Checks that `truncate` keeps exactly the `k` smallest rank costs.
pub fn truncation_is_minimal(candidates: &[CandidateQuery], k: usize) -> bool {
    let kept = planning::truncate(candidates.to_vec(), k);
    let mut all: Vec<usize> = candidates.iter().map(|c| c.rank_cost).collect();
    all.sort();
    all.truncate(k);
    let mut got: Vec<usize> = kept.iter().map(|c| c.rank_cost).collect();
    got.sort();
    kept.len() == k.min(candidates.len()) && got == all
}

// ------------------------------------------------------------------ fuzz

#[derive(Debug, Default, Clone, Copy)]
pub struct FuzzStats {
    pub inputs: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub panics: usize,
}

const FRAGMENTS: &[&str] = &[
    "{", "}", "[", "]", ",", ":", "\"", "\"triples\"", "\"label\"", "\"predicates\"", "\"form\"", "\"boolean\"",
    "\"count\"", "\"?x\"", "\"Intel\"", "\"founded\"", "\"http://x/a\"", "null", "true", "7", "```json", "```", "\\u00e9",
    " ", "\n",
];

/// Raw random bytes for most inputs, JSON-ish fragment soup for the rest so
/// that the deeper validation branches are reached.
pub fn fuzz_input(rng: &mut ChaCha8Rng) -> String {
    if rng.gen_bool(0.6) {
        let len = rng.gen_range(0..200);
        let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        String::from_utf8_lossy(&bytes).into_owned()
    } else {
        (0..rng.gen_range(1..40)).map(|_| *FRAGMENTS.choose(rng).unwrap()).collect()
    }
}

/// Feeds `n` inputs through the three validators, counting every outcome.
pub fn fuzz_validators(seed: u64, n: usize) -> FuzzStats {
    let mut rng = rng(seed);
    let candidates = vec![
        ("http://x/a".to_string(), "Intel".to_string()),
        ("http://x/b".to_string(), "Intel 4004".to_string()),
    ];
    let all = vec!["http://x/a".to_string(), "http://x/p".to_string()];
    let mut stats = FuzzStats::default();
    for _ in 0..n {
        let input = fuzz_input(&mut rng);
        stats.inputs += 1;
        let outcome = catch_unwind(AssertUnwindSafe(|| {
            [
                validate_triples(&input).is_ok(),
                validate_vertex(&input, &candidates).is_ok(),
                validate_predicate_selection(&input, &all).is_ok(),
            ]
        }));
        match outcome {
            Ok(results) => {
                for ok in results {
                    if ok {
                        stats.accepted += 1;
                    } else {
                        stats.rejected += 1;
                    }
                }
            }
            Err(_) => stats.panics += 1,
        }
    }
    stats
}

// ---------------------------------------------------------------- fail-k

pub const VALID_TRIPLES: &str = r#"{"triples":[["?who","founded","Intel"]],"form":"list"}"#;

/// Outcome of one validated call whose first successful attempt is `k`.
#[derive(Debug, PartialEq, Eq)]
pub struct FailK {
    pub succeeded: bool,
    pub calls: usize,
}

/// Runs each validated agent against a backend whose first `k - 1` replies
/// are unusable; `garbage` picks invalid text instead of transport errors.
pub fn fail_k(agent: &str, theta: u32, k: u32, garbage: bool) -> FailK {
    let prompts = PromptLibrary::builtin();
    let (task, output) = match agent {
        "classify" => ("classify", "Self-contained"),
        "extract_triples" => ("extract_triples", VALID_TRIPLES),
        "select_vertex" => ("select_vertex", r#"{"label":"Intel"}"#),
        "select_predicates" => ("select_predicates", r#"{"predicates":["http://x/p"]}"#),
        other => panic!("unknown agent {other}"),
    };
    let rule = ScriptRule::reply(task, output);
    let rule = if garbage {
        rule.garbage_first(k - 1, "no usable output")
    } else {
        rule.failing_first(k - 1)
    };
    let backend = Arc::new(ScriptedBackend::new(vec![rule]).unwrap());
    let gw = Gateway::new(backend.as_ref());
    let succeeded = match agent {
        "classify" => classify(&gw, &prompts.classify, "Who founded Intel?", theta).is_ok(),
        "extract_triples" => extract_qir(&gw, &prompts.extract_triples, "Who founded Intel?", theta).is_ok(),
        "select_vertex" => {
            let cands = vec![("http://x/a".to_string(), "Intel".to_string())];
            select_vertex(&gw, &prompts.select_vertex, "Who founded Intel?", "Intel", &cands, theta).is_ok()
        }
        _ => {
            let index = planning::PredicateIndex {
                all_predicates: vec!["http://x/p".to_string(), "http://x/q".to_string()],
                pred_to_query: BTreeMap::new(),
            };
            !planning::filter_predicates(&gw, &prompts.select_predicates, "Who founded Intel?", &index, theta).fell_back
        }
    };
    FailK {
        succeeded,
        calls: gw.calls(),
    }
}

/// Every agent and failure mode: success at attempt `k <= theta` using
/// exactly `k` calls; failure for `k > theta` after exactly `theta` calls.
pub fn fail_k_matrix() -> Result<usize, String> {
    let mut checked = 0;
    for agent in ["classify", "extract_triples", "select_vertex", "select_predicates"] {
        for garbage in [false, true] {
            for theta in 1..=3u32 {
                for k in 1..=theta + 2 {
                    let got = fail_k(agent, theta, k, garbage);
                    let want = if k <= theta {
                        FailK {
                            succeeded: true,
                            calls: k as usize,
                        }
                    } else {
                        FailK {
                            succeeded: false,
                            calls: theta as usize,
                        }
                    };
                    if got != want {
                        return Err(format!(
                            "{agent} theta={theta} k={k} garbage={garbage}: got {got:?}, want {want:?}"
                        ));
                    }
                    checked += 1;
                }
            }
        }
    }
    Ok(checked)
}

// --------------------------------------------------------------- metrics

pub fn ans(v: &str) -> Answer {
    if v.contains("://") {
        Answer::entity(v).unwrap()
    } else {
        Answer::literal(v)
    }
}

pub fn answers(vs: &[&str]) -> Vec<Answer> {
    vs.iter().map(|v| ans(v)).collect()
}

/// Predicted, gold, (P, R, F1), (P@1, MRR, Hit@5).
pub type MetricCase = (Vec<Answer>, Vec<Answer>, [f64; 3], [f64; 3]);

/// Hand-computed metric cases.
pub fn metric_cases() -> Vec<MetricCase> {
    let two_thirds = 2.0 / 3.0;
    vec![
        (answers(&["Berlin"]), answers(&["Berlin"]), [1.0, 1.0, 1.0], [1.0, 1.0, 1.0]),
        (answers(&["a", "b", "d"]), answers(&["a", "b", "c"]), [two_thirds; 3], [1.0, 1.0, 1.0]),
        (vec![], answers(&["a"]), [0.0; 3], [0.0; 3]),
        (vec![], vec![], [1.0; 3], [1.0; 3]),
        (answers(&["x"]), vec![], [0.0; 3], [0.0; 3]),
        (answers(&["wrong", "right"]), answers(&["right"]), [0.5, 1.0, two_thirds], [0.0, 0.5, 1.0]),
        (
            answers(&["w1", "w2", "w3", "w4", "w5", "w6", "g"]),
            answers(&["g"]),
            [1.0 / 7.0, 1.0, 0.25],
            [0.0, 1.0 / 7.0, 0.0],
        ),
        (
            answers(&["w1", "w2", "w3", "w4", "g"]),
            answers(&["g", "h"]),
            [0.2, 0.5, 2.0 * 0.2 * 0.5 / 0.7],
            [0.0, 0.2, 1.0],
        ),
        (answers(&[" YATE "]), answers(&["yate"]), [1.0; 3], [1.0; 3]),
        (vec![Answer::count(2001)], answers(&["2001"]), [1.0; 3], [1.0; 3]),
        (vec![Answer::boolean(true)], vec![Answer::boolean(false)], [0.0; 3], [0.0; 3]),
        (
            answers(&["http://x/A", "http://x/b"]),
            answers(&["http://x/a", "http://x/b"]),
            [0.5, 0.5, 0.5],
            [0.0, 0.5, 1.0],
        ),
        (answers(&["a", "a", "b"]), answers(&["b"]), [0.5, 1.0, two_thirds], [0.0, 0.5, 1.0]),
    ]
}
