//! Structured query grammar.
//!
//! ```text
//! LOCATE <label>
//! RELATE <relation> <label>
//! MEASURE DIST <label> <label>
//! FILTER WITHIN <number><m|cm> OF <label>
//! CLOSEST <label> TO <label>
//! ```
//!
//! Keywords are case-insensitive. A label is one word or a double-quoted string.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::RelationType;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown relation '{name}' at position {position}; expected one of: {valid}")]
    UnknownRelation { name: String, position: usize, valid: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Query {
    Locate { label: String },
    Relate { relation: RelationType, anchor: String },
    Measure { a: String, b: String },
    FilterWithin { distance: f64, anchor: String },
    Closest { label: String, to: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryCategory {
    Locate,
    Relate,
    Measure,
    FilterWithin,
    Closest,
}

impl QueryCategory {
    pub const ALL: [QueryCategory; 5] = [
        QueryCategory::Locate,
        QueryCategory::Relate,
        QueryCategory::Measure,
        QueryCategory::FilterWithin,
        QueryCategory::Closest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QueryCategory::Locate => "locate",
            QueryCategory::Relate => "relate",
            QueryCategory::Measure => "measure",
            QueryCategory::FilterWithin => "filter_within",
            QueryCategory::Closest => "closest",
        }
    }
}

impl Query {
    pub fn category(&self) -> QueryCategory {
        match self {
            Query::Locate { .. } => QueryCategory::Locate,
            Query::Relate { .. } => QueryCategory::Relate,
            Query::Measure { .. } => QueryCategory::Measure,
            Query::FilterWithin { .. } => QueryCategory::FilterWithin,
            Query::Closest { .. } => QueryCategory::Closest,
        }
    }

    /// Labels the query refers to, in textual order.
    pub fn labels(&self) -> Vec<&str> {
        match self {
            Query::Locate { label } => vec![label],
            Query::Relate { anchor, .. } | Query::FilterWithin { anchor, .. } => vec![anchor],
            Query::Measure { a, b } => vec![a, b],
            Query::Closest { label, to } => vec![label, to],
        }
    }

    /// Whether answering depends on objects the query does not name.
    pub fn needs_full_scene(&self) -> bool {
        matches!(self, Query::Relate { .. } | Query::FilterWithin { .. })
    }
}

/// Quotes a label when it cannot be written as a single bare word.
pub fn quote_label(label: &str) -> String {
    if label.is_empty() || label.chars().any(|c| c.is_whitespace() || c == '"') {
        format!("\"{label}\"")
    } else {
        label.to_string()
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::Locate { label } => write!(f, "LOCATE {}", quote_label(label)),
            Query::Relate { relation, anchor } => write!(f, "RELATE {relation} {}", quote_label(anchor)),
            Query::Measure { a, b } => write!(f, "MEASURE DIST {} {}", quote_label(a), quote_label(b)),
            Query::FilterWithin { distance, anchor } => {
                write!(f, "FILTER WITHIN {}m OF {}", distance, quote_label(anchor))
            }
            Query::Closest { label, to } => write!(f, "CLOSEST {} TO {}", quote_label(label), quote_label(to)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    text: String,
    position: usize,
    quoted: bool,
}

fn syntax(position: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        position,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut s = String::new();
            let mut closed = false;
            for (_, c) in chars.by_ref() {
                if c == '"' {
                    closed = true;
                    break;
                }
                s.push(c);
            }
            if !closed {
                return Err(syntax(i, "unterminated quoted label"));
            }
            if s.trim().is_empty() {
                return Err(syntax(i, "empty quoted label"));
            }
            out.push(Token {
                text: s,
                position: i,
                quoted: true,
            });
        } else {
            let mut s = String::new();
            while let Some(&(_, c)) = chars.peek() {
                if c.is_whitespace() || c == '"' {
                    break;
                }
                s.push(c);
                chars.next();
            }
            out.push(Token {
                text: s,
                position: i,
                quoted: false,
            });
        }
    }
    Ok(out)
}

struct Cursor {
    tokens: Vec<Token>,
    next: usize,
    end: usize,
}

impl Cursor {
    fn take(&mut self, what: &str) -> Result<Token, ParseError> {
        let t = self.tokens.get(self.next).cloned().ok_or_else(|| syntax(self.end, format!("expected {what}")))?;
        self.next += 1;
        Ok(t)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        let t = self.take(kw)?;
        if t.quoted || !t.text.eq_ignore_ascii_case(kw) {
            return Err(syntax(t.position, format!("expected {kw}, found '{}'", t.text)));
        }
        Ok(())
    }

    fn label(&mut self) -> Result<String, ParseError> {
        Ok(self.take("label")?.text)
    }

    fn finish(&self) -> Result<(), ParseError> {
        match self.tokens.get(self.next) {
            Some(t) => Err(syntax(t.position, format!("unexpected '{}'", t.text))),
            None => Ok(()),
        }
    }
}

fn parse_distance(cur: &mut Cursor) -> Result<f64, ParseError> {
    let t = cur.take("distance")?;
    let split = t.text.find(|c: char| c.is_ascii_alphabetic()).unwrap_or(t.text.len());
    let (num, unit) = t.text.split_at(split);
    let unit = if unit.is_empty() {
        let u = cur.take("distance unit (m or cm)")?;
        if u.quoted {
            return Err(syntax(u.position, "expected distance unit (m or cm)"));
        }
        u.text.to_ascii_lowercase()
    } else {
        unit.to_ascii_lowercase()
    };
    let value: f64 = num
        .parse()
        .map_err(|_| syntax(t.position, format!("expected number, found '{}'", t.text)))?;
    let scale = match unit.as_str() {
        "m" => 1.0,
        "cm" => 0.01,
        other => return Err(syntax(t.position + split, format!("unknown unit '{other}' (m or cm)"))),
    };
    let d = value * scale;
    if !(d > 0.0 && d.is_finite()) {
        return Err(syntax(t.position, "distance must be positive"));
    }
    Ok(d)
}

pub fn parse_query(text: &str) -> Result<Query, ParseError> {
    let mut cur = Cursor {
        tokens: tokenize(text)?,
        next: 0,
        end: text.len(),
    };
    let head = cur.take("query keyword (LOCATE, RELATE, MEASURE, FILTER, CLOSEST)")?;
    if head.quoted {
        return Err(syntax(head.position, "expected query keyword"));
    }
    let q = match head.text.to_ascii_uppercase().as_str() {
        "LOCATE" => Query::Locate { label: cur.label()? },
        "RELATE" => {
            let r = cur.take("relation")?;
            let relation = r.text.parse::<RelationType>().map_err(|_| ParseError::UnknownRelation {
                name: r.text.clone(),
                position: r.position,
                valid: RelationType::valid_names(),
            })?;
            Query::Relate {
                relation,
                anchor: cur.label()?,
            }
        }
        "MEASURE" => {
            cur.keyword("DIST")?;
            Query::Measure {
                a: cur.label()?,
                b: cur.label()?,
            }
        }
        "FILTER" => {
            cur.keyword("WITHIN")?;
            let distance = parse_distance(&mut cur)?;
            cur.keyword("OF")?;
            Query::FilterWithin {
                distance,
                anchor: cur.label()?,
            }
        }
        "CLOSEST" => {
            let label = cur.label()?;
            cur.keyword("TO")?;
            Query::Closest { label, to: cur.label()? }
        }
        other => {
            return Err(syntax(
                head.position,
                format!("unknown query keyword '{other}' (LOCATE, RELATE, MEASURE, FILTER, CLOSEST)"),
            ))
        }
    };
    cur.finish()?;
    Ok(q)
}
