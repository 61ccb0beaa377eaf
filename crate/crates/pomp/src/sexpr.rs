//! S-expression reader and writer used by the domain, problem, and plan
//! file formats. Every node carries the source position it was read from
//! so later passes can report errors against the original text.

use std::fmt;

use thiserror::Error;

/// Line/column position inside an input text, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: u32,
    pub column: u32,
}

impl Span {
    pub fn new(line: u32, column: u32) -> Self {
        Span { line, column }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SexprError {
    #[error("{span}: unbalanced parenthesis: unexpected ')'")]
    UnexpectedClose { span: Span },
    #[error("{span}: unbalanced parenthesis: '(' is never closed")]
    UnclosedList { span: Span },
    #[error("{span}: invalid character {ch:?}")]
    InvalidChar { span: Span, ch: char },
    #[error("{span}: expected a single expression, found trailing input")]
    TrailingInput { span: Span },
    #[error("empty input")]
    Empty,
}

/// An atom or a list. Atoms are uninterpreted tokens; keyword and number
/// recognition happens in the parsers built on top.
#[derive(Debug, Clone)]
pub enum Sexpr {
    Atom { token: String, span: Span },
    List { items: Vec<Sexpr>, span: Span },
}

impl Sexpr {
    pub fn span(&self) -> Span {
        match self {
            Sexpr::Atom { span, .. } | Sexpr::List { span, .. } => *span,
        }
    }

    pub fn atom(&self) -> Option<&str> {
        match self {
            Sexpr::Atom { token, .. } => Some(token),
            Sexpr::List { .. } => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexpr]> {
        match self {
            Sexpr::List { items, .. } => Some(items),
            Sexpr::Atom { .. } => None,
        }
    }

    /// True for `()`.
    pub fn is_empty_list(&self) -> bool {
        matches!(self, Sexpr::List { items, .. } if items.is_empty())
    }
}

/// Structural equality, ignoring spans.
impl PartialEq for Sexpr {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Sexpr::Atom { token: a, .. }, Sexpr::Atom { token: b, .. }) => a == b,
            (Sexpr::List { items: a, .. }, Sexpr::List { items: b, .. }) => a == b,
            _ => false,
        }
    }
}

impl Eq for Sexpr {}

fn atom_char(c: char) -> bool {
    !c.is_whitespace() && c != '(' && c != ')' && c != ';'
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    column: u32,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader { chars: text.chars().peekable(), line: 1, column: 1 }
    }

    fn span(&self) -> Span {
        Span::new(self.line, self.column)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    /// Skips whitespace and `;` comments running to end of line.
    fn skip_trivia(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == ';' {
                while let Some(&c) = self.chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn read(&mut self) -> Result<Option<Sexpr>, SexprError> {
        self.skip_trivia();
        let span = self.span();
        let Some(&c) = self.chars.peek() else { return Ok(None) };
        match c {
            '(' => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.chars.peek() {
                        Some(')') => {
                            self.bump();
                            return Ok(Some(Sexpr::List { items, span }));
                        }
                        Some(_) => match self.read()? {
                            Some(e) => items.push(e),
                            None => return Err(SexprError::UnclosedList { span }),
                        },
                        None => return Err(SexprError::UnclosedList { span }),
                    }
                }
            }
            ')' => Err(SexprError::UnexpectedClose { span }),
            c if atom_char(c) => {
                let mut token = String::new();
                while let Some(&c) = self.chars.peek() {
                    if atom_char(c) {
                        token.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
                Ok(Some(Sexpr::Atom { token, span }))
            }
            c => Err(SexprError::InvalidChar { span, ch: c }),
        }
    }
}

/// Reads every top-level expression in `text`.
pub fn read_all(text: &str) -> Result<Vec<Sexpr>, SexprError> {
    let mut reader = Reader::new(text);
    let mut out = Vec::new();
    while let Some(e) = reader.read()? {
        out.push(e);
    }
    Ok(out)
}

/// Reads exactly one expression.
pub fn read_one(text: &str) -> Result<Sexpr, SexprError> {
    let mut reader = Reader::new(text);
    let first = reader.read()?.ok_or(SexprError::Empty)?;
    reader.skip_trivia();
    if reader.chars.peek().is_some() {
        return Err(SexprError::TrailingInput { span: reader.span() });
    }
    Ok(first)
}

/// Single-line rendering.
pub fn to_string(e: &Sexpr) -> String {
    let mut s = String::new();
    write_inline(e, &mut s);
    s
}

fn write_inline(e: &Sexpr, out: &mut String) {
    match e {
        Sexpr::Atom { token, .. } => out.push_str(token),
        Sexpr::List { items, .. } => {
            out.push('(');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write_inline(item, out);
            }
            out.push(')');
        }
    }
}

/// Builders used by the printers.
pub fn atom(token: impl Into<String>) -> Sexpr {
    Sexpr::Atom { token: token.into(), span: Span::new(0, 0) }
}

pub fn list(items: Vec<Sexpr>) -> Sexpr {
    Sexpr::List { items, span: Span::new(0, 0) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_nested_lists_with_comments() {
        let e = read_one("(a (b ?x) ; comment\n  ())").unwrap();
        let items = e.list().unwrap();
        assert_eq!(items.len(), 3);
        assert_eq!(items[0].atom(), Some("a"));
        assert!(items[2].is_empty_list());
    }

    #[test]
    fn spans_point_into_the_input() {
        let e = read_one("(a\n  bc)").unwrap();
        let items = e.list().unwrap();
        assert_eq!(items[1].span(), Span::new(2, 3));
    }

    #[test]
    fn unbalanced_parens_are_reported() {
        assert!(matches!(read_one("(a (b)"), Err(SexprError::UnclosedList { .. })));
        assert!(matches!(read_all("a) b"), Err(SexprError::UnexpectedClose { span }) if span == Span::new(1, 2)));
    }

    #[test]
    fn round_trips_through_to_string() {
        let src = "(define (operator x) :parameters (?a ?b) :effect (and (p ?a) (not (q ?b))))";
        let e = read_one(src).unwrap();
        let printed = to_string(&e);
        assert_eq!(read_one(&printed).unwrap(), e);
        assert_eq!(printed, src);
    }
}
