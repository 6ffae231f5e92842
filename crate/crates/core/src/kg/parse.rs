//! Parser for the SPARQL text produced by [`SparqlQuery`]'s `Display`.
//!
//! Accepts the emitted subset only; anything else is a [`ParseError`].

use thiserror::Error;

use super::query::{ContainsFilter, PatternTerm, QueryForm, SparqlQuery, TriplePattern};
use super::{Term, XSD};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("SPARQL parse error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Iri(String),
    Var(String),
    Blank(String),
    Lit(Term),
    Int(usize),
    Word(String),
    Punct(char),
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let err = |offset, message: &str| ParseError {
        offset,
        message: message.to_string(),
    };
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < text.len() {
        let c = text[i..].chars().next().expect("in bounds");
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        let start = i;
        match c {
            '<' => {
                let end = text[i..].find('>').ok_or_else(|| err(i, "unterminated IRI"))?;
                out.push((start, Tok::Iri(text[i + 1..i + end].to_string())));
                i += end + 1;
            }
            '?' | '$' => {
                let len = ident_len(&text[i + 1..]);
                if len == 0 {
                    return Err(err(i, "empty variable name"));
                }
                out.push((start, Tok::Var(text[i + 1..i + 1 + len].to_string())));
                i += 1 + len;
            }
            '_' if text[i..].starts_with("_:") => {
                let len = ident_len(&text[i + 2..]);
                out.push((start, Tok::Blank(text[i + 2..i + 2 + len].to_string())));
                i += 2 + len;
            }
            '"' => {
                let mut j = i + 1;
                let mut value = String::new();
                loop {
                    let Some(ch) = text[j..].chars().next() else {
                        return Err(err(i, "unterminated string"));
                    };
                    j += ch.len_utf8();
                    match ch {
                        '"' => break,
                        '\\' => {
                            let Some(e) = text[j..].chars().next() else {
                                return Err(err(j, "dangling escape"));
                            };
                            j += e.len_utf8();
                            value.push(match e {
                                'n' => '\n',
                                't' => '\t',
                                'r' => '\r',
                                other => other,
                            });
                        }
                        ch => value.push(ch),
                    }
                }
                i = j;
                let term = if text[i..].starts_with("^^<") {
                    let end = text[i + 3..].find('>').ok_or_else(|| err(i, "unterminated datatype"))?;
                    let dt = text[i + 3..i + 3 + end].to_string();
                    i += 3 + end + 1;
                    Term::typed(value, dt)
                } else if text[i..].starts_with('@') {
                    let len = text[i + 1..]
                        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
                        .unwrap_or(text.len() - i - 1);
                    let lang = text[i + 1..i + 1 + len].to_string();
                    i += 1 + len;
                    Term::lang(value, lang)
                } else {
                    Term::literal(value)
                };
                out.push((start, Tok::Lit(term)));
            }
            '{' | '}' | '(' | ')' | '.' | ',' => {
                out.push((start, Tok::Punct(c)));
                i += 1;
            }
            c if c.is_ascii_digit() => {
                let len = bytes[i..].iter().take_while(|b| b.is_ascii_digit()).count();
                let n = text[i..i + len].parse().map_err(|_| err(i, "integer out of range"))?;
                out.push((start, Tok::Int(n)));
                i += len;
            }
            c if c.is_ascii_alphabetic() => {
                let len = ident_len(&text[i..]);
                out.push((start, Tok::Word(text[i..i + len].to_ascii_uppercase())));
                i += len;
            }
            _ => return Err(err(i, &format!("unexpected character {c:?}"))),
        }
    }
    Ok(out)
}

fn ident_len(s: &str) -> usize {
    s.char_indices()
        .find(|(_, c)| !(c.is_alphanumeric() || *c == '_'))
        .map_or(s.len(), |(i, _)| i)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x == w)
    }

    fn word(&mut self, w: &str) -> Result<(), ParseError> {
        if self.is_word(w) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected {w}"))
        }
    }

    fn punct(&mut self, c: char) -> Result<(), ParseError> {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected '{c}'"))
        }
    }

    fn var(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Var(v)) => {
                let v = v.clone();
                self.pos += 1;
                Ok(v)
            }
            _ => self.fail("expected variable"),
        }
    }

    fn term(&mut self) -> Result<PatternTerm, ParseError> {
        let here = self.offset();
        match self.next() {
            Some(Tok::Var(v)) => Ok(PatternTerm::Var(v)),
            Some(Tok::Iri(i)) => Ok(PatternTerm::Const(Term::iri(i))),
            Some(Tok::Blank(b)) => Ok(PatternTerm::Const(Term::Blank { value: b })),
            Some(Tok::Lit(t)) => Ok(PatternTerm::Const(t)),
            Some(Tok::Int(n)) => Ok(PatternTerm::Const(Term::typed(n.to_string(), format!("{XSD}integer")))),
            _ => Err(ParseError {
                offset: here,
                message: "expected term".into(),
            }),
        }
    }

    fn filter(&mut self) -> Result<ContainsFilter, ParseError> {
        self.word("FILTER")?;
        self.punct('(')?;
        self.word("CONTAINS")?;
        self.punct('(')?;
        self.word("LCASE")?;
        self.punct('(')?;
        self.word("STR")?;
        self.punct('(')?;
        let var = self.var()?;
        self.punct(')')?;
        self.punct(')')?;
        self.punct(',')?;
        let token = match self.next() {
            Some(Tok::Lit(t)) => t.value().to_string(),
            _ => return self.fail("expected string literal"),
        };
        self.punct(')')?;
        self.punct(')')?;
        Ok(ContainsFilter::new(&var, &token))
    }

    fn group(&mut self) -> Result<(Vec<TriplePattern>, Vec<ContainsFilter>), ParseError> {
        if self.is_word("WHERE") {
            self.pos += 1;
        }
        self.punct('{')?;
        let mut patterns = Vec::new();
        let mut filters = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Punct('}')) => {
                    self.pos += 1;
                    break;
                }
                Some(Tok::Word(w)) if w == "FILTER" => filters.push(self.filter()?),
                Some(_) => {
                    let s = self.term()?;
                    let p = self.term()?;
                    let o = self.term()?;
                    patterns.push(TriplePattern::new(s, p, o));
                    if self.peek() == Some(&Tok::Punct('.')) {
                        self.pos += 1;
                    }
                }
                None => return self.fail("unterminated group"),
            }
        }
        Ok((patterns, filters))
    }

    fn query(&mut self) -> Result<SparqlQuery, ParseError> {
        let (form, distinct, projection) = if self.is_word("ASK") {
            self.pos += 1;
            (QueryForm::Ask, false, Vec::new())
        } else {
            self.word("SELECT")?;
            let mut distinct = false;
            if self.is_word("DISTINCT") {
                self.pos += 1;
                distinct = true;
            }
            if self.peek() == Some(&Tok::Punct('(')) {
                self.pos += 1;
                self.word("COUNT")?;
                self.punct('(')?;
                let mut count_distinct = false;
                if self.is_word("DISTINCT") {
                    self.pos += 1;
                    count_distinct = true;
                }
                let v = self.var()?;
                self.punct(')')?;
                self.word("AS")?;
                self.var()?;
                self.punct(')')?;
                (QueryForm::SelectCount, count_distinct, vec![v])
            } else {
                let mut vars = Vec::new();
                while let Some(Tok::Var(_)) = self.peek() {
                    vars.push(self.var()?);
                }
                if vars.is_empty() {
                    return self.fail("expected projection");
                }
                (QueryForm::Select, distinct, vars)
            }
        };
        let (patterns, filters) = self.group()?;
        let mut limit = None;
        if self.is_word("LIMIT") {
            self.pos += 1;
            match self.next() {
                Some(Tok::Int(n)) => limit = Some(n),
                _ => return self.fail("expected integer after LIMIT"),
            }
        }
        if self.peek().is_some() {
            return self.fail("trailing input");
        }
        Ok(SparqlQuery {
            form,
            distinct,
            patterns,
            filters,
            projection,
            limit,
        })
    }
}

/// Parses and validates one query of the emitted subset.
pub fn parse_query(text: &str) -> Result<SparqlQuery, ParseError> {
    let toks = tokenize(text)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let query = parser.query()?;
    query.validate().map_err(|e| ParseError {
        offset: 0,
        message: e.to_string(),
    })?;
    Ok(query)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_emitted_forms() {
        let texts = [
            "SELECT DISTINCT ?who WHERE { <http://x/Intel> <http://x/founder> ?who . }",
            "SELECT (COUNT(DISTINCT ?p) AS ?count) WHERE { ?p <http://x/by> <http://x/A> . }",
            "ASK WHERE { <http://x/M> <http://x/spouse> <http://x/B> . }",
            "SELECT DISTINCT ?l ?v WHERE { ?v <http://x/label> ?l . FILTER(CONTAINS(LCASE(STR(?l)), \"harry\")) } LIMIT 600",
            "SELECT ?f WHERE { ?f <http://x/year> \"2001\"^^<http://www.w3.org/2001/XMLSchema#integer> . ?f <http://x/l> \"Film \\\"one\\\"\"@en . }",
        ];
        for text in texts {
            let q = parse_query(text).unwrap();
            assert_eq!(q.to_string(), text);
        }
    }

    #[test]
    fn lenient_on_case_and_layout() {
        let q = parse_query("select ?x where {\n ?x <http://x/p> 42\n}").unwrap();
        assert_eq!(q.form, QueryForm::Select);
        assert!(!q.distinct);
        assert_eq!(q.patterns.len(), 1);
    }

    #[test]
    fn rejects_outside_subset() {
        for text in [
            "",
            "SELECT ?x WHERE { ?x <p> ?y OPTIONAL { ?y <q> ?z } }",
            "SELECT ?z WHERE { ?x <http://x/p> ?y }",
            "ASK { ?x <http://x/p> ?y } LIMIT",
            "SELECT WHERE { ?x <http://x/p> ?y }",
            "DESCRIBE <http://x/a>",
        ] {
            assert!(parse_query(text).is_err(), "{text}");
        }
    }
}
