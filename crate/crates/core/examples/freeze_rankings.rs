//! Regenerates `data/frozen-rankings.json`: the predicate ranking the
//! trigram embedder produces for each fixture fact.
//!
//! Run with `cargo run -p kgqa-core --example freeze_rankings`.

use std::collections::BTreeMap;

use kgqa_core::desk;
use kgqa_core::matching::{link_relation, TrigramEmbedder};
use kgqa_core::model::Triple;
use serde_json::json;

const R: &str = "http://desk.example.org/resource/";
const D: &str = "http://desk.example.org/dblp/";

/// A QIR fact and the vertex each of its entities links to.
type Case<'a> = ([&'a str; 3], &'a [(&'a str, String)]);

fn main() -> anyhow::Result<()> {
    let config = desk::config();
    let store = desk::store(&config.label_predicates);
    let embedder = TrigramEmbedder::default();
    let cases: &[Case] = &[
        (["?who", "founded", "Intel"], &[("Intel", format!("{R}Intel"))]),
        (["Intel", "located in", "?place"], &[("Intel", format!("{R}Intel"))]),
        (["Intel 4004", "released in", "?year"], &[("Intel 4004", format!("{R}Intel_4004"))]),
        (["J. K. Rowling", "born in", "?place"], &[("J. K. Rowling", format!("{R}J._K._Rowling"))]),
        (["Harry Potter", "author", "?author"], &[("Harry Potter", format!("{R}Harry_Potter"))]),
        (
            ["Harry Potter", "released", "?year"],
            &[("Harry Potter", format!("{R}Harry_Potter_and_the_Philosopher's_Stone_(film)"))],
        ),
        (
            ["Michelle", "wife of", "Barack Obama"],
            &[("Michelle", format!("{R}Michelle_Obama")), ("Barack Obama", format!("{R}Barack_Obama"))],
        ),
        (["?paper", "authored by", "Alice Chen"], &[("Alice Chen", format!("{D}Alice_Chen"))]),
    ];
    let mut out = Vec::new();
    for (fact, links) in cases {
        let triple = Triple::new(fact[0], fact[1], fact[2]);
        let vertices: BTreeMap<String, String> = links.iter().map(|(e, v)| (e.to_string(), v.clone())).collect();
        let ranked = link_relation(&triple, &vertices, &embedder, &store, &config.label_predicates)?
            .expect("fixture facts have a linked endpoint");
        let ranking: Vec<_> = ranked.iter().map(|o| json!({"iri": o.iri, "direction": o.direction})).collect();
        out.push(json!({"fact": fact, "vertices": vertices, "ranking": ranking}));
    }
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/frozen-rankings.json");
    std::fs::write(path, serde_json::to_string_pretty(&out)? + "\n")?;
    println!("wrote {} rankings to {path}", out.len());
    Ok(())
}
