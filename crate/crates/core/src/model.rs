//! Shared domain types: answers, dialogue history, question context and the
//! question intermediate representation (QIR).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("entity answer must be an absolute IRI, got {0:?}")]
    NotAnIri(String),
    #[error("count answer must be a non-negative integer, got {0:?}")]
    BadCount(String),
    #[error("boolean answer must be \"true\" or \"false\", got {0:?}")]
    BadBoolean(String),
    #[error("question must not be empty")]
    EmptyQuestion,
}

/// What kind of value an [`Answer`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    Entity,
    Literal,
    Count,
    Boolean,
}

/// A single answer value returned from the knowledge graph.
///
/// Entity answers hold an absolute IRI; literal answers hold the lexical
/// form; counts and booleans hold their canonical textual form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawAnswer")]
pub struct Answer {
    pub kind: AnswerKind,
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_label: Option<String>,
}

#[derive(Deserialize)]
struct RawAnswer {
    kind: AnswerKind,
    value: String,
    #[serde(default)]
    display_label: Option<String>,
}

impl TryFrom<RawAnswer> for Answer {
    type Error = ModelError;

    fn try_from(raw: RawAnswer) -> Result<Self, Self::Error> {
        let answer = Answer {
            kind: raw.kind,
            value: raw.value,
            display_label: raw.display_label,
        };
        answer.validate()?;
        Ok(answer)
    }
}

impl Answer {
    pub fn entity(iri: impl Into<String>) -> Result<Self, ModelError> {
        let iri = iri.into();
        if !is_absolute_iri(&iri) {
            return Err(ModelError::NotAnIri(iri));
        }
        Ok(Answer {
            kind: AnswerKind::Entity,
            value: iri,
            display_label: None,
        })
    }

    pub fn literal(value: impl Into<String>) -> Self {
        Answer {
            kind: AnswerKind::Literal,
            value: value.into(),
            display_label: None,
        }
    }

    pub fn count(n: u64) -> Self {
        Answer {
            kind: AnswerKind::Count,
            value: n.to_string(),
            display_label: None,
        }
    }

    pub fn boolean(b: bool) -> Self {
        Answer {
            kind: AnswerKind::Boolean,
            value: b.to_string(),
            display_label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.display_label = Some(label.into());
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self.kind {
            AnswerKind::Entity if !is_absolute_iri(&self.value) => {
                Err(ModelError::NotAnIri(self.value.clone()))
            }
            AnswerKind::Count if self.value.parse::<u64>().is_err() => {
                Err(ModelError::BadCount(self.value.clone()))
            }
            AnswerKind::Boolean if self.value != "true" && self.value != "false" => {
                Err(ModelError::BadBoolean(self.value.clone()))
            }
            _ => Ok(()),
        }
    }

    /// Identity used for de-duplication: display labels do not count.
    pub fn key(&self) -> (AnswerKind, &str) {
        (self.kind, &self.value)
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.display_label {
            Some(label) => write!(f, "{label} <{}>", self.value),
            None => f.write_str(&self.value),
        }
    }
}

/// `scheme:rest` with a letter-led scheme and no whitespace.
pub fn is_absolute_iri(s: &str) -> bool {
    let Some((scheme, rest)) = s.split_once(':') else {
        return false;
    };
    let mut chars = scheme.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
        && !rest.is_empty()
        && !s.chars().any(|c| c.is_whitespace() || matches!(c, '<' | '>' | '"'))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub question: String,
    pub answers: Vec<Answer>,
    pub asked_at: u64,
}

/// Append-only dialogue history.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    turns: Vec<Turn>,
}

impl Dialogue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// Returns a new dialogue with `(question, answers)` appended as the final
    /// turn. Existing turns are carried over untouched.
    pub fn append_turn(&self, question: &str, answers: Vec<Answer>) -> Result<Dialogue, ModelError> {
        let mut next = self.clone();
        next.push_turn(question, answers)?;
        Ok(next)
    }

    pub(crate) fn push_turn(&mut self, question: &str, answers: Vec<Answer>) -> Result<(), ModelError> {
        if question.trim().is_empty() {
            return Err(ModelError::EmptyQuestion);
        }
        let asked_at = self.turns.last().map_or(1, |t| t.asked_at + 1);
        self.turns.push(Turn {
            question: question.to_string(),
            answers,
            asked_at,
        });
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPair {
    pub question: String,
    pub truncated_answers: Vec<Answer>,
}

/// Prior turns as handed to prompt-driven agents, answers cut to a prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionContext {
    pub pairs: Vec<ContextPair>,
}

impl QuestionContext {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Plain-text rendering used inside prompts.
    pub fn render(&self) -> String {
        if self.pairs.is_empty() {
            return "(no previous turns)".to_string();
        }
        let mut out = String::new();
        for (i, pair) in self.pairs.iter().enumerate() {
            let n = i + 1;
            out.push_str(&format!("Q{n}: {}\n", pair.question));
            if pair.truncated_answers.is_empty() {
                out.push_str(&format!("A{n}: (no answer found)\n"));
            } else {
                let answers: Vec<String> = pair.truncated_answers.iter().map(|a| a.to_string()).collect();
                out.push_str(&format!("A{n}: {}\n", answers.join("; ")));
            }
        }
        out
    }
}

/// Builds the question context from every stored turn, keeping only the
/// first `limit` answers of each turn in execution order.
pub fn build_context(dialogue: &Dialogue, limit: usize) -> QuestionContext {
    QuestionContext {
        pairs: dialogue
            .turns()
            .iter()
            .map(|turn| ContextPair {
                question: turn.question.clone(),
                truncated_answers: turn.answers.iter().take(limit).cloned().collect(),
            })
            .collect(),
    }
}

/// Endpoint of a QIR fact: a mentioned entity or a `?variable`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum QirTerm {
    Entity(String),
    Variable(String),
}

impl QirTerm {
    pub fn parse(text: &str) -> QirTerm {
        let text = text.trim();
        if text.starts_with('?') {
            QirTerm::Variable(text.to_string())
        } else {
            QirTerm::Entity(text.to_string())
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            QirTerm::Entity(s) | QirTerm::Variable(s) => s,
        }
    }

    pub fn is_variable(&self) -> bool {
        matches!(self, QirTerm::Variable(_))
    }
}

impl From<String> for QirTerm {
    fn from(s: String) -> Self {
        QirTerm::parse(&s)
    }
}

impl From<QirTerm> for String {
    fn from(t: QirTerm) -> Self {
        match t {
            QirTerm::Entity(s) | QirTerm::Variable(s) => s,
        }
    }
}

impl fmt::Display for QirTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: QirTerm,
    pub relation: String,
    pub object: QirTerm,
}

impl Triple {
    pub fn new(subject: &str, relation: &str, object: &str) -> Self {
        Triple {
            subject: QirTerm::parse(subject),
            relation: relation.trim().to_string(),
            object: QirTerm::parse(object),
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}, {}>", self.subject, self.relation, self.object)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionForm {
    #[default]
    List,
    Count,
    Boolean,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QirError {
    #[error("QIR has no facts")]
    NoFacts,
    #[error("QIR mentions no known entity")]
    NoEntity,
    #[error("non-boolean QIR has no variable")]
    NoVariable,
    #[error("fact {0} has an empty component")]
    EmptyComponent(usize),
    #[error("invalid variable name {0:?}")]
    InvalidVariable(String),
    #[error("QIR sets disagree with its facts")]
    Inconsistent,
    #[error("answer target {0:?} is not a variable of the QIR")]
    UnknownTarget(String),
}

/// Question intermediate representation: entities, variables, relation
/// phrases and the relational facts connecting them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qir {
    pub entities: BTreeSet<String>,
    pub variables: BTreeSet<String>,
    pub relations: BTreeSet<String>,
    pub facts: Vec<Triple>,
    pub form: QuestionForm,
    /// Variable the question asks for, when the extractor named one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

impl Qir {
    /// Builds a QIR whose entity, variable and relation sets are exactly those
    /// mentioned by `facts`.
    pub fn from_facts(facts: Vec<Triple>, form: QuestionForm, target: Option<String>) -> Result<Qir, QirError> {
        let mut entities = BTreeSet::new();
        let mut variables = BTreeSet::new();
        let mut relations = BTreeSet::new();
        for fact in &facts {
            for term in [&fact.subject, &fact.object] {
                match term {
                    QirTerm::Entity(e) => entities.insert(e.clone()),
                    QirTerm::Variable(v) => variables.insert(v.clone()),
                };
            }
            relations.insert(fact.relation.clone());
        }
        let qir = Qir {
            entities,
            variables,
            relations,
            facts,
            form,
            target,
        };
        qir.check()?;
        Ok(qir)
    }

    /// Checks every structural invariant of the representation.
    pub fn check(&self) -> Result<(), QirError> {
        if self.facts.is_empty() {
            return Err(QirError::NoFacts);
        }
        let mut entities = BTreeSet::new();
        let mut variables = BTreeSet::new();
        let mut relations = BTreeSet::new();
        for (i, fact) in self.facts.iter().enumerate() {
            if fact.relation.trim().is_empty()
                || fact.subject.as_str().trim().is_empty()
                || fact.object.as_str().trim().is_empty()
            {
                return Err(QirError::EmptyComponent(i));
            }
            for term in [&fact.subject, &fact.object] {
                match term {
                    QirTerm::Entity(e) => {
                        entities.insert(e.as_str());
                    }
                    QirTerm::Variable(v) => {
                        if !is_valid_variable(v) {
                            return Err(QirError::InvalidVariable(v.clone()));
                        }
                        variables.insert(v.as_str());
                    }
                }
            }
            relations.insert(fact.relation.as_str());
        }
        if entities.is_empty() {
            return Err(QirError::NoEntity);
        }
        if self.form != QuestionForm::Boolean && variables.is_empty() {
            return Err(QirError::NoVariable);
        }
        let same = |set: &BTreeSet<String>, seen: &BTreeSet<&str>| {
            set.len() == seen.len() && set.iter().all(|s| seen.contains(s.as_str()))
        };
        if !same(&self.entities, &entities) || !same(&self.variables, &variables) || !same(&self.relations, &relations) {
            return Err(QirError::Inconsistent);
        }
        if let Some(target) = &self.target {
            if !self.variables.contains(target) {
                return Err(QirError::UnknownTarget(target.clone()));
            }
        }
        Ok(())
    }

    /// The variable whose bindings answer the question: the named target,
    /// otherwise the first variable in fact order.
    pub fn answer_variable(&self) -> Option<&str> {
        if let Some(t) = &self.target {
            return Some(t);
        }
        self.facts
            .iter()
            .flat_map(|f| [&f.subject, &f.object])
            .find_map(|t| match t {
                QirTerm::Variable(v) => Some(v.as_str()),
                QirTerm::Entity(_) => None,
            })
    }
}

/// SPARQL variable syntax: `?` followed by letters, digits or underscores.
pub fn is_valid_variable(name: &str) -> bool {
    match name.strip_prefix('?') {
        Some(rest) => !rest.is_empty() && rest.chars().all(|c| c.is_alphanumeric() || c == '_'),
        None => false,
    }
}
