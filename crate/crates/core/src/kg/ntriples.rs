//! Line-oriented N-Triples reader.

use thiserror::Error;

use super::Term;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct NTriplesError {
    pub line: usize,
    pub message: String,
}

/// Parses a whole N-Triples document. Blank lines and `#` comments are
/// skipped; the first malformed line aborts with its 1-based number.
pub fn parse_ntriples(text: &str) -> Result<Vec<(Term, Term, Term)>, NTriplesError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| NTriplesError { line: i + 1, message };
        let mut cur = Cursor { s: line.trim(), pos: 0 };
        if cur.s.is_empty() || cur.s.starts_with('#') {
            continue;
        }
        let subject = cur.term().map_err(err)?;
        if subject.is_literal() {
            return Err(err("subject cannot be a literal".into()));
        }
        let predicate = cur.term().map_err(err)?;
        if predicate.as_iri().is_none() {
            return Err(err("predicate must be an IRI".into()));
        }
        let object = cur.term().map_err(err)?;
        cur.skip_ws();
        if !cur.eat('.') {
            return Err(err("expected '.' at end of triple".into()));
        }
        cur.skip_ws();
        if !(cur.rest().is_empty() || cur.rest().starts_with('#')) {
            return Err(err(format!("unexpected trailing text {:?}", cur.rest())));
        }
        out.push((subject, predicate, object));
    }
    Ok(out)
}

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn eat(&mut self, c: char) -> bool {
        if self.rest().starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn term(&mut self) -> Result<Term, String> {
        self.skip_ws();
        let rest = self.rest();
        if rest.starts_with('<') {
            Ok(Term::iri(self.iri()?))
        } else if let Some(after) = rest.strip_prefix("_:") {
            let len = after.find(|c: char| c.is_whitespace()).unwrap_or(after.len());
            if len == 0 {
                return Err("empty blank node label".into());
            }
            self.pos += 2 + len;
            Ok(Term::Blank {
                value: after[..len].to_string(),
            })
        } else if rest.starts_with('"') {
            self.literal()
        } else {
            Err(format!("unexpected input {:?}", rest.chars().take(20).collect::<String>()))
        }
    }

    fn iri(&mut self) -> Result<String, String> {
        let rest = self.rest();
        let Some(end) = rest.find('>') else {
            return Err("unterminated IRI".into());
        };
        let iri = unescape(&rest[1..end])?;
        if iri.is_empty() || iri.chars().any(|c| c.is_whitespace() || c == '<' || c == '"') {
            return Err(format!("invalid IRI {iri:?}"));
        }
        self.pos += end + 1;
        Ok(iri)
    }

    fn literal(&mut self) -> Result<Term, String> {
        let rest = self.rest();
        let bytes = rest.as_bytes();
        let mut i = 1;
        let mut escaped = false;
        let end = loop {
            match bytes.get(i) {
                None => return Err("unterminated literal".into()),
                Some(b'\\') if !escaped => escaped = true,
                Some(b'"') if !escaped => break i,
                Some(_) => escaped = false,
            }
            i += 1;
        };
        let value = unescape(&rest[1..end])?;
        self.pos += end + 1;
        if self.rest().starts_with("^^") {
            self.pos += 2;
            if !self.rest().starts_with('<') {
                return Err("datatype must be an IRI".into());
            }
            let dt = self.iri()?;
            return Ok(Term::typed(value, dt));
        }
        if let Some(after) = self.rest().strip_prefix('@') {
            let len = after
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
                .unwrap_or(after.len());
            if len == 0 {
                return Err("empty language tag".into());
            }
            self.pos += 1 + len;
            return Ok(Term::lang(value, &after[..len]));
        }
        Ok(Term::literal(value))
    }
}

/// Resolves `\t \n \r \" \' \\ \uXXXX \UXXXXXXXX` escapes.
fn unescape(s: &str) -> Result<String, String> {
    if !s.contains('\\') {
        return Ok(s.to_string());
    }
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('b') => out.push('\u{8}'),
            Some('f') => out.push('\u{c}'),
            Some('"') => out.push('"'),
            Some('\'') => out.push('\''),
            Some('\\') => out.push('\\'),
            Some(u @ ('u' | 'U')) => {
                let n = if u == 'u' { 4 } else { 8 };
                let hex: String = chars.by_ref().take(n).collect();
                let code = u32::from_str_radix(&hex, 16).map_err(|_| format!("bad escape \\{u}{hex}"))?;
                out.push(char::from_u32(code).ok_or_else(|| format!("invalid code point {code:x}"))?);
            }
            other => return Err(format!("unknown escape \\{}", other.map(String::from).unwrap_or_default())),
        }
    }
    Ok(out)
}
