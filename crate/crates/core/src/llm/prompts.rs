//! Built-in prompt set, one template per agent task.

use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use super::{FewShotExample, OutputContract, PromptError, PromptSpec, PromptStrategy};

pub const CLASSIFY: &str = "classify";
pub const REPHRASE: &str = "rephrase";
pub const EXTRACT_TRIPLES: &str = "extract_triples";
pub const SELECT_VERTEX: &str = "select_vertex";
pub const SELECT_PREDICATES: &str = "select_predicates";
pub const REFORMULATE_ANSWER: &str = "reformulate_answer";
pub const TRANSLATE: &str = "translate";

#[derive(Debug, Error)]
pub enum PromptLoadError {
    #[error("cannot read prompt file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid few-shot examples: {0}")]
    Examples(#[from] serde_json::Error),
    #[error(transparent)]
    Spec(#[from] PromptError),
}

#[derive(Debug, Clone)]
pub struct PromptLibrary {
    pub classify: Arc<PromptSpec>,
    pub rephrase: Arc<PromptSpec>,
    pub extract_triples: Arc<PromptSpec>,
    pub select_vertex: Arc<PromptSpec>,
    pub select_predicates: Arc<PromptSpec>,
    pub reformulate_answer: Arc<PromptSpec>,
    pub translate: Arc<PromptSpec>,
}

struct Sources {
    classify: String,
    rephrase: String,
    extract_triples: String,
    extract_examples: String,
    select_vertex: String,
    select_predicates: String,
    reformulate_answer: String,
    translate: String,
}

impl PromptLibrary {
    pub fn builtin() -> Self {
        Self::build(Sources {
            classify: include_str!("../../prompts/classify.txt").into(),
            rephrase: include_str!("../../prompts/rephrase.txt").into(),
            extract_triples: include_str!("../../prompts/extract_triples.txt").into(),
            extract_examples: include_str!("../../prompts/extract_triples.examples.json").into(),
            select_vertex: include_str!("../../prompts/select_vertex.txt").into(),
            select_predicates: include_str!("../../prompts/select_predicates.txt").into(),
            reformulate_answer: include_str!("../../prompts/reformulate_answer.txt").into(),
            translate: include_str!("../../prompts/translate.txt").into(),
        })
        .expect("built-in prompts are valid")
    }

    /// Loads the same file layout as the built-in set from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptLoadError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| PromptLoadError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        Self::build(Sources {
            classify: read("classify.txt")?,
            rephrase: read("rephrase.txt")?,
            extract_triples: read("extract_triples.txt")?,
            extract_examples: read("extract_triples.examples.json")?,
            select_vertex: read("select_vertex.txt")?,
            select_predicates: read("select_predicates.txt")?,
            reformulate_answer: read("reformulate_answer.txt")?,
            translate: read("translate.txt")?,
        })
    }

    fn build(src: Sources) -> Result<Self, PromptLoadError> {
        use OutputContract::*;
        use PromptStrategy::*;
        let examples: Vec<FewShotExample> = serde_json::from_str(&src.extract_examples)?;
        let spec = |name, text: &str, strategy, examples, contract| {
            PromptSpec::new(name, text, strategy, examples, contract).map(Arc::new)
        };
        Ok(PromptLibrary {
            classify: spec(CLASSIFY, &src.classify, ZeroShot, vec![], Label)?,
            rephrase: spec(REPHRASE, &src.rephrase, ZeroShot, vec![], FreeText)?,
            extract_triples: spec(EXTRACT_TRIPLES, &src.extract_triples, ChainOfThoughtFewShot, examples, JsonObject)?,
            select_vertex: spec(SELECT_VERTEX, &src.select_vertex, ZeroShot, vec![], JsonObject)?,
            select_predicates: spec(SELECT_PREDICATES, &src.select_predicates, ZeroShotChainOfThought, vec![], JsonObject)?,
            reformulate_answer: spec(REFORMULATE_ANSWER, &src.reformulate_answer, ZeroShot, vec![], FreeText)?,
            translate: spec(TRANSLATE, &src.translate, ZeroShot, vec![], FreeText)?,
        })
    }
}

impl Default for PromptLibrary {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_set_has_expected_strategies() {
        let lib = PromptLibrary::builtin();
        assert_eq!(lib.extract_triples.strategy, PromptStrategy::ChainOfThoughtFewShot);
        assert_eq!(lib.extract_triples.examples.len(), 2);
        assert_eq!(lib.classify.strategy, PromptStrategy::ZeroShot);
        assert_eq!(lib.select_predicates.strategy, PromptStrategy::ZeroShotChainOfThought);
        for p in [&lib.rephrase, &lib.select_vertex, &lib.reformulate_answer, &lib.translate] {
            assert_eq!(p.strategy, PromptStrategy::ZeroShot);
        }
    }

    #[test]
    fn templates_carry_their_placeholders() {
        let lib = PromptLibrary::builtin();
        assert!(lib.rephrase.instruction.contains("{context}"));
        assert!(lib.select_vertex.instruction.contains("{candidates}"));
        assert!(lib.select_predicates.instruction.contains("{predicates}"));
        assert!(lib.classify.instruction.contains("{question}"));
    }
}
