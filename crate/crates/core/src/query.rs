//! Exact-phrase boolean queries.
//!
//! Grammar (operators are uppercase keywords, whitespace between tokens is free):
//!
//! ```text
//! query  := and ("OR" and)*
//! and    := atom ("AND" atom)*
//! atom   := '"' phrase '"' | '(' query ')'
//! ```
//!
//! Both operators are left-associative and `AND` binds tighter than `OR`.
//! The rendered form produced by [`render_query`] is canonical and is used as the
//! key for stored samples.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Query {
    Phrase(String),
    And(Box<Query>, Box<Query>),
    Or(Box<Query>, Box<Query>),
}

impl Query {
    /// Builds a phrase atom, checking it is non-empty and quote-free.
    pub fn phrase(text: impl Into<String>) -> Result<Query, QueryError> {
        let text = text.into();
        check_phrase(&text, 0)?;
        Ok(Query::Phrase(text))
    }

    pub fn and(left: Query, right: Query) -> Query {
        Query::And(Box::new(left), Box::new(right))
    }

    pub fn or(left: Query, right: Query) -> Query {
        Query::Or(Box::new(left), Box::new(right))
    }

    pub fn depth(&self) -> usize {
        match self {
            Query::Phrase(_) => 1,
            Query::And(l, r) | Query::Or(l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    /// Canonical string form; see [`render_query`].
    pub fn canonical(&self) -> String {
        render_query(self)
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_query(self))
    }
}

impl std::str::FromStr for Query {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_query(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("empty query")]
    Empty,
    #[error("unbalanced quote starting at byte {0}")]
    UnbalancedQuote(usize),
    #[error("empty phrase at byte {0}")]
    EmptyPhrase(usize),
    #[error("operator {op} at byte {pos} has no right-hand operand")]
    DanglingOperator { op: &'static str, pos: usize },
    #[error("expected a quoted phrase or '(' at byte {0}")]
    ExpectedOperand(usize),
    #[error("expected AND or OR at byte {0}")]
    ExpectedOperator(usize),
    #[error("unbalanced parenthesis at byte {0}")]
    UnbalancedParen(usize),
    #[error("lowercase operator {word:?} at byte {pos}; operators are case-sensitive, write {upper}")]
    LowercaseOperator {
        word: String,
        upper: &'static str,
        pos: usize,
    },
    #[error("unexpected character {ch:?} at byte {pos}")]
    Unexpected { ch: char, pos: usize },
}

fn check_phrase(text: &str, pos: usize) -> Result<(), QueryError> {
    if text.trim().is_empty() {
        return Err(QueryError::EmptyPhrase(pos));
    }
    if text.contains('"') {
        return Err(QueryError::UnbalancedQuote(pos));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Phrase(String),
    And,
    Or,
    Open,
    Close,
}

fn tokenize(input: &str) -> Result<Vec<(Tok, usize)>, QueryError> {
    let mut toks = Vec::new();
    let mut chars = input.char_indices().peekable();
    while let Some(&(pos, ch)) = chars.peek() {
        match ch {
            c if c.is_whitespace() => {
                chars.next();
            }
            '"' => {
                chars.next();
                let start = pos + 1;
                let end = loop {
                    match chars.next() {
                        Some((i, '"')) => break i,
                        Some(_) => {}
                        None => return Err(QueryError::UnbalancedQuote(pos)),
                    }
                };
                let text = &input[start..end];
                check_phrase(text, pos)?;
                toks.push((Tok::Phrase(text.to_string()), pos));
            }
            '(' => {
                chars.next();
                toks.push((Tok::Open, pos));
            }
            ')' => {
                chars.next();
                toks.push((Tok::Close, pos));
            }
            c if c.is_alphabetic() => {
                let mut end = pos;
                while let Some(&(i, c)) = chars.peek() {
                    if c.is_alphanumeric() {
                        end = i + c.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                let word = &input[pos..end];
                match word {
                    "AND" => toks.push((Tok::And, pos)),
                    "OR" => toks.push((Tok::Or, pos)),
                    w if w.eq_ignore_ascii_case("and") => {
                        return Err(QueryError::LowercaseOperator {
                            word: w.to_string(),
                            upper: "AND",
                            pos,
                        })
                    }
                    w if w.eq_ignore_ascii_case("or") => {
                        return Err(QueryError::LowercaseOperator {
                            word: w.to_string(),
                            upper: "OR",
                            pos,
                        })
                    }
                    _ => return Err(QueryError::ExpectedOperand(pos)),
                }
            }
            c => return Err(QueryError::Unexpected { ch: c, pos }),
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|(_, p)| *p).unwrap_or(self.len)
    }

    fn or_expr(&mut self) -> Result<Query, QueryError> {
        let mut left = self.and_expr()?;
        while self.peek() == Some(&Tok::Or) {
            let pos = self.pos();
            self.at += 1;
            if self.at >= self.toks.len() {
                return Err(QueryError::DanglingOperator { op: "OR", pos });
            }
            let right = self.and_expr()?;
            left = Query::or(left, right);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Query, QueryError> {
        let mut left = self.atom()?;
        while self.peek() == Some(&Tok::And) {
            let pos = self.pos();
            self.at += 1;
            if self.at >= self.toks.len() {
                return Err(QueryError::DanglingOperator { op: "AND", pos });
            }
            let right = self.atom()?;
            left = Query::and(left, right);
        }
        Ok(left)
    }

    fn atom(&mut self) -> Result<Query, QueryError> {
        let pos = self.pos();
        match self.toks.get(self.at).map(|(t, _)| t.clone()) {
            Some(Tok::Phrase(text)) => {
                self.at += 1;
                Ok(Query::Phrase(text))
            }
            Some(Tok::Open) => {
                self.at += 1;
                let inner = self.or_expr()?;
                if self.peek() != Some(&Tok::Close) {
                    return Err(QueryError::UnbalancedParen(pos));
                }
                self.at += 1;
                Ok(inner)
            }
            Some(Tok::And) => Err(QueryError::DanglingOperator { op: "AND", pos }),
            Some(Tok::Or) => Err(QueryError::DanglingOperator { op: "OR", pos }),
            Some(Tok::Close) | None => Err(QueryError::ExpectedOperand(pos)),
        }
    }
}

pub fn parse_query(input: &str) -> Result<Query, QueryError> {
    let toks = tokenize(input)?;
    if toks.is_empty() {
        return Err(QueryError::Empty);
    }
    let mut p = Parser {
        toks,
        at: 0,
        len: input.len(),
    };
    let q = p.or_expr()?;
    match p.peek() {
        None => Ok(q),
        Some(Tok::Close) => Err(QueryError::UnbalancedParen(p.pos())),
        Some(_) => Err(QueryError::ExpectedOperator(p.pos())),
    }
}

/// Renders the canonical form: quoted phrases, single spaces around operators,
/// parentheses only where precedence or left-associativity require them.
pub fn render_query(q: &Query) -> String {
    let mut out = String::new();
    render_into(q, &mut out);
    out
}

fn render_into(q: &Query, out: &mut String) {
    match q {
        Query::Phrase(t) => {
            out.push('"');
            out.push_str(t);
            out.push('"');
        }
        Query::And(l, r) => {
            render_child(l, matches!(**l, Query::Or(..)), out);
            out.push_str(" AND ");
            render_child(r, !matches!(**r, Query::Phrase(_)), out);
        }
        Query::Or(l, r) => {
            render_child(l, false, out);
            out.push_str(" OR ");
            render_child(r, matches!(**r, Query::Or(..)), out);
        }
    }
}

fn render_child(q: &Query, parens: bool, out: &mut String) {
    if parens {
        out.push('(');
        render_into(q, out);
        out.push(')');
    } else {
        render_into(q, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Query {
        Query::Phrase(s.to_string())
    }

    #[test]
    fn joint_query_form() {
        assert_eq!(
            parse_query(r#""Huichol" AND "sacred land""#).unwrap(),
            Query::and(p("Huichol"), p("sacred land"))
        );
        assert_eq!(parse_query(r#""table""#).unwrap(), p("table"));
        assert_eq!(
            parse_query(r#""a" AND "b" OR "c""#).unwrap(),
            Query::or(Query::and(p("a"), p("b")), p("c"))
        );
        assert_eq!(
            parse_query(r#""a" OR "b" AND "c""#).unwrap(),
            Query::or(p("a"), Query::and(p("b"), p("c")))
        );
    }

    #[test]
    fn whitespace_is_free() {
        assert_eq!(
            parse_query("  \"a\"AND\t\"b\"\n").unwrap(),
            Query::and(p("a"), p("b"))
        );
        assert_eq!(parse_query(r#"(("a"))"#).unwrap(), p("a"));
    }

    #[test]
    fn rendering() {
        assert_eq!(
            render_query(&Query::and(p("Wirikuta"), p("mines"))),
            r#""Wirikuta" AND "mines""#
        );
        assert_eq!(
            render_query(&Query::or(Query::and(p("a"), p("b")), p("c"))),
            r#""a" AND "b" OR "c""#
        );
        assert_eq!(
            render_query(&Query::and(Query::or(p("a"), p("b")), p("c"))),
            r#"("a" OR "b") AND "c""#
        );
        assert_eq!(
            render_query(&Query::and(p("a"), Query::and(p("b"), p("c")))),
            r#""a" AND ("b" AND "c")"#
        );
        assert_eq!(
            render_query(&Query::and(Query::and(p("a"), p("b")), p("c"))),
            r#""a" AND "b" AND "c""#
        );
    }

    #[test]
    fn errors() {
        use QueryError::*;
        assert_eq!(parse_query(""), Err(Empty));
        assert_eq!(parse_query("   "), Err(Empty));
        assert!(matches!(parse_query(r#""abc"#), Err(UnbalancedQuote(0))));
        assert!(matches!(parse_query(r#""a" AND ""#), Err(UnbalancedQuote(_))));
        assert!(matches!(parse_query(r#""""#), Err(EmptyPhrase(0))));
        assert!(matches!(parse_query(r#"" ""#), Err(EmptyPhrase(0))));
        assert!(matches!(
            parse_query(r#""a" AND"#),
            Err(DanglingOperator { op: "AND", .. })
        ));
        assert!(matches!(
            parse_query(r#"OR "a""#),
            Err(DanglingOperator { op: "OR", .. })
        ));
        assert!(matches!(parse_query(r#""a" "b""#), Err(ExpectedOperator(_))));
        assert!(matches!(parse_query(r#"("a""#), Err(UnbalancedParen(0))));
        assert!(matches!(parse_query(r#""a")"#), Err(UnbalancedParen(_))));
        assert!(matches!(parse_query(r#"a"#), Err(ExpectedOperand(0))));
        assert!(matches!(parse_query(r#""a" & "b""#), Err(Unexpected { ch: '&', .. })));
    }

    #[test]
    fn lowercase_operators_get_a_hint() {
        let err = parse_query(r#""u" and "v""#).unwrap_err();
        assert!(matches!(err, QueryError::LowercaseOperator { upper: "AND", .. }));
        assert!(err.to_string().contains("write AND"));
        let err = parse_query(r#""u" Or "v""#).unwrap_err();
        assert!(matches!(err, QueryError::LowercaseOperator { upper: "OR", .. }));
    }

    #[test]
    fn phrase_constructor() {
        assert!(Query::phrase("ok").is_ok());
        assert!(Query::phrase("").is_err());
        assert!(Query::phrase("a\"b").is_err());
    }

    #[test]
    fn unicode_phrases() {
        let q = parse_query("\"Wixárika\" AND \"tierra sagrada\"").unwrap();
        assert_eq!(parse_query(&render_query(&q)).unwrap(), q);
    }
}
