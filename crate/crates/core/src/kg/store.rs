//! In-memory triple store evaluating the emitted SPARQL subset exactly.
//!
//! Result rows are returned sorted by the projected variables so that every
//! run over the same data yields the same order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use super::query::{PatternTerm, QueryForm, SparqlQuery};
use super::{parse_ntriples, Binding, KgError, KgTarget, NTriplesError, ResultSet, Term};

type Id = u32;
type Row = (Id, Id, Id);

#[derive(Debug, Default)]
pub struct TripleStore {
    terms: Vec<Term>,
    ids: HashMap<Term, Id>,
    triples: BTreeSet<Row>,
    by_s: HashMap<Id, Vec<Row>>,
    by_p: HashMap<Id, Vec<Row>>,
    by_o: HashMap<Id, Vec<Row>>,
    label_predicates: Vec<String>,
    label_index: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreLoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: NTriplesError,
    },
}

impl TripleStore {
    pub fn new(label_predicates: &[String]) -> Self {
        TripleStore {
            label_predicates: label_predicates.to_vec(),
            ..Default::default()
        }
    }

    pub fn from_ntriples(text: &str, label_predicates: &[String]) -> Result<Self, NTriplesError> {
        let mut store = Self::new(label_predicates);
        for (s, p, o) in parse_ntriples(text)? {
            store.insert(s, p, o);
        }
        Ok(store)
    }

    pub fn load_file(path: &Path, label_predicates: &[String]) -> Result<Self, StoreLoadError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| StoreLoadError::Io {
            path: shown.clone(),
            source,
        })?;
        Self::from_ntriples(&text, label_predicates).map_err(|source| StoreLoadError::Parse { path: shown, source })
    }

    fn intern(&mut self, term: Term) -> Id {
        if let Some(id) = self.ids.get(&term) {
            return *id;
        }
        let id = Id::try_from(self.terms.len()).expect("store exceeds u32 terms");
        self.terms.push(term.clone());
        self.ids.insert(term, id);
        id
    }

    /// Adds a triple; returns false when it was already present.
    pub fn insert(&mut self, s: Term, p: Term, o: Term) -> bool {
        let label = match (&s, &p, &o) {
            (Term::Iri { value: subj }, Term::Iri { value: pred }, Term::Literal { value, .. })
                if self.label_predicates.iter().any(|lp| lp == pred) =>
            {
                Some((subj.clone(), value.clone()))
            }
            _ => None,
        };
        let row = (self.intern(s), self.intern(p), self.intern(o));
        if !self.triples.insert(row) {
            return false;
        }
        self.by_s.entry(row.0).or_default().push(row);
        self.by_p.entry(row.1).or_default().push(row);
        self.by_o.entry(row.2).or_default().push(row);
        if let Some((subj, value)) = label {
            self.label_index.entry(subj).or_default().push(value);
        }
        true
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> impl Iterator<Item = (&Term, &Term, &Term)> + '_ {
        self.triples.iter().map(|&(s, p, o)| {
            (&self.terms[s as usize], &self.terms[p as usize], &self.terms[o as usize])
        })
    }

    /// Label literals of `iri` under the configured label predicates.
    pub fn labels(&self, iri: &str) -> &[String] {
        self.label_index.get(iri).map_or(&[], Vec::as_slice)
    }

    pub fn label_predicates(&self) -> &[String] {
        &self.label_predicates
    }

    /// Evaluates a validated query.
    pub fn evaluate(&self, query: &SparqlQuery) -> Result<ResultSet, KgError> {
        query.validate()?;
        let mut slots: Vec<&str> = Vec::new();
        let mut compiled = Vec::with_capacity(query.patterns.len());
        for pattern in &query.patterns {
            let mut pos = [Slot::Missing; 3];
            for (k, term) in pattern.terms().into_iter().enumerate() {
                pos[k] = match term {
                    PatternTerm::Var(v) => Slot::Var(slot_of(v.as_str(), &mut slots)),
                    PatternTerm::Const(t) => self.ids.get(t).map_or(Slot::Missing, |id| Slot::Const(*id)),
                };
            }
            if pos.contains(&Slot::Missing) {
                // A constant absent from the store can never match.
                return Ok(self.finish(query, &slots, Vec::new()));
            }
            compiled.push(pos);
        }
        let order = join_order(&compiled);
        let mut solutions: Vec<Vec<Option<Id>>> = vec![vec![None; slots.len()]];
        for idx in order {
            let pat = compiled[idx];
            let mut next = Vec::new();
            for sol in &solutions {
                let bound = |slot: Slot| match slot {
                    Slot::Const(id) => Some(id),
                    Slot::Var(v) => sol[v],
                    Slot::Missing => None,
                };
                let candidates: &[Row] = if let Some(s) = bound(pat[0]) {
                    self.by_s.get(&s).map_or(&[], Vec::as_slice)
                } else if let Some(o) = bound(pat[2]) {
                    self.by_o.get(&o).map_or(&[], Vec::as_slice)
                } else if let Some(p) = bound(pat[1]) {
                    self.by_p.get(&p).map_or(&[], Vec::as_slice)
                } else {
                    next.extend(self.triples.iter().filter_map(|row| extend(sol, &pat, *row)));
                    continue;
                };
                next.extend(candidates.iter().filter_map(|row| extend(sol, &pat, *row)));
            }
            solutions = next;
            if solutions.is_empty() {
                break;
            }
        }
        for filter in &query.filters {
            let slot = slots.iter().position(|s| *s == filter.var).expect("validated filter var");
            solutions.retain(|sol| {
                sol[slot].is_some_and(|id| self.terms[id as usize].value().to_lowercase().contains(&filter.token))
            });
        }
        Ok(self.finish(query, &slots, solutions))
    }

    fn finish(&self, query: &SparqlQuery, slots: &[&str], solutions: Vec<Vec<Option<Id>>>) -> ResultSet {
        let slot = |name: &str| slots.iter().position(|s| *s == name);
        match query.form {
            QueryForm::Ask => ResultSet::Boolean {
                value: !solutions.is_empty(),
            },
            QueryForm::SelectCount => {
                let Some(k) = slot(&query.projection[0]) else {
                    return ResultSet::Count { value: 0 };
                };
                let values = solutions.iter().filter_map(|s| s[k]);
                let value = if query.distinct {
                    values.collect::<BTreeSet<_>>().len()
                } else {
                    values.count()
                };
                ResultSet::Count { value: value as u64 }
            }
            QueryForm::Select => {
                let cols: Vec<Option<usize>> = query.projection.iter().map(|v| slot(v)).collect();
                let mut rows: Vec<Vec<&Term>> = solutions
                    .iter()
                    .filter_map(|sol| {
                        cols.iter()
                            .map(|c| c.and_then(|k| sol[k]).map(|id| &self.terms[id as usize]))
                            .collect::<Option<Vec<_>>>()
                    })
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
                        .map(|row| {
                            query
                                .projection
                                .iter()
                                .cloned()
                                .zip(row.into_iter().cloned())
                                .collect::<Binding>()
                        })
                        .collect(),
                }
            }
        }
    }
}

fn slot_of<'a>(name: &'a str, slots: &mut Vec<&'a str>) -> usize {
    match slots.iter().position(|s| *s == name) {
        Some(i) => i,
        None => {
            slots.push(name);
            slots.len() - 1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Var(usize),
    Const(Id),
    Missing,
}

/// Greedy order: next pattern is the one with most positions already bound.
fn join_order(patterns: &[[Slot; 3]]) -> Vec<usize> {
    let mut bound_vars = BTreeSet::new();
    let mut remaining: Vec<usize> = (0..patterns.len()).collect();
    let mut order = Vec::with_capacity(patterns.len());
    while !remaining.is_empty() {
        let score = |i: usize| {
            patterns[i]
                .iter()
                .filter(|s| match s {
                    Slot::Const(_) => true,
                    Slot::Var(v) => bound_vars.contains(v),
                    Slot::Missing => false,
                })
                .count()
        };
        let (at, &best) = remaining
            .iter()
            .enumerate()
            .max_by_key(|(k, &i)| (score(i), std::cmp::Reverse(*k)))
            .expect("non-empty");
        remaining.remove(at);
        for s in patterns[best] {
            if let Slot::Var(v) = s {
                bound_vars.insert(v);
            }
        }
        order.push(best);
    }
    order
}

fn extend(sol: &[Option<Id>], pat: &[Slot; 3], row: Row) -> Option<Vec<Option<Id>>> {
    let mut next = sol.to_vec();
    for (slot, value) in pat.iter().zip([row.0, row.1, row.2]) {
        match *slot {
            Slot::Const(id) if id != value => return None,
            Slot::Var(v) => match next[v] {
                Some(existing) if existing != value => return None,
                Some(_) => {}
                None => next[v] = Some(value),
            },
            _ => {}
        }
    }
    Some(next)
}

impl KgTarget for TripleStore {
    fn execute(&self, query: &SparqlQuery) -> Result<ResultSet, KgError> {
        self.evaluate(query)
    }

    fn describe(&self) -> String {
        format!("embedded store ({} triples)", self.len())
    }
}
