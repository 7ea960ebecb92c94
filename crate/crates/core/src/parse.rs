//! Text formats for programs and terms.
//!
//! ```text
//! constructors: zero/0, suc/1 ;
//! operations:   add/2 ;
//! rules:
//!   add(zero, y)   -> y ;
//!   add(suc(x), y) -> suc(add(x, y)) ;
//! ```
//!
//! Inside rules a bare identifier is a constant when it is declared as a
//! nullary symbol and a variable otherwise. `f^N(t)` abbreviates `N` nested
//! applications of the unary symbol `f`. Line comments start with `#` or `//`.

use std::fmt;

use thiserror::Error;

use crate::term::{Program, ProgramError, Rule, Signature, Symbol, Term};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// Failure to load a program: either the text is malformed or the rules
/// violate orthogonality.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Program(#[from] ProgramError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Num(u64),
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(n) => write!(f, "`{n}`"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

const PUNCT: [&str; 17] = [
    "->", "=>", "(", ")", ",", ";", "/", ":", "^", "{", "}", "[", "]", "@", "=", "*", "×",
];

pub(crate) fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut col = 1;
    let mut rest = text;
    while let Some(ch) = rest.chars().next() {
        if ch == '\n' {
            line += 1;
            col = 1;
            rest = &rest[1..];
            continue;
        }
        if ch.is_whitespace() {
            col += 1;
            rest = &rest[ch.len_utf8()..];
            continue;
        }
        if ch == '#' || rest.starts_with("//") {
            let end = rest.find('\n').unwrap_or(rest.len());
            rest = &rest[end..];
            continue;
        }
        let (tok, len) = if ch.is_ascii_alphabetic() || ch == '_' {
            let len = rest
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '\''))
                .unwrap_or(rest.len());
            (Tok::Ident(rest[..len].to_string()), len)
        } else if ch.is_ascii_digit() {
            let len = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
            let n = rest[..len].parse().map_err(|_| ParseError {
                line,
                column: col,
                message: format!("number `{}` is too large", &rest[..len]),
            })?;
            (Tok::Num(n), len)
        } else if let Some(p) = PUNCT.iter().find(|p| rest.starts_with(**p)) {
            (Tok::Punct(p), p.len())
        } else {
            return Err(ParseError {
                line,
                column: col,
                message: format!("unexpected character `{ch}`"),
            });
        };
        out.push(Spanned {
            tok,
            line,
            column: col,
        });
        col += rest[..len].chars().count();
        rest = &rest[len..];
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

pub(crate) struct Cursor {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Cursor {
    pub fn new(text: &str) -> Result<Cursor, ParseError> {
        Ok(Cursor {
            toks: lex(text)?,
            pos: 0,
        })
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn error(&self, message: impl Into<String>) -> ParseError {
        let s = &self.toks[self.pos];
        ParseError {
            line: s.line,
            column: s.column,
            message: message.into(),
        }
    }

    pub fn unexpected(&self, wanted: &str) -> ParseError {
        self.error(format!("expected {wanted}, found {}", self.peek()))
    }

    pub fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    pub fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.next();
            true
        } else {
            false
        }
    }

    pub fn expect_punct(&mut self, p: &str) -> Result<(), ParseError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{p}`")))
        }
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_keyword(kw) {
            self.next();
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    pub fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Tok::Ident(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => Err(self.unexpected("an identifier")),
        }
    }

    pub fn number(&mut self) -> Result<u64, ParseError> {
        match self.peek() {
            Tok::Num(n) => {
                let n = *n;
                self.next();
                Ok(n)
            }
            _ => Err(self.unexpected("a number")),
        }
    }

    pub fn expect_eof(&self) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Eof => Ok(()),
            _ => Err(self.unexpected("end of input")),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum VarMode {
    Allow,
    Forbid,
}

fn parse_term_at(cur: &mut Cursor, sig: &Signature, vars: VarMode) -> Result<Term, ParseError> {
    // Explicit stack: arguments may nest arbitrarily deep.
    struct Frame {
        symbol: Symbol,
        arity: usize,
        repeat: u64,
        args: Vec<Term>,
        line: usize,
        column: usize,
    }
    let mut frames: Vec<Frame> = Vec::new();
    loop {
        let (line, column) = (cur.toks[cur.pos].line, cur.toks[cur.pos].column);
        let name = cur.ident().map_err(|_| cur.unexpected("a term"))?;
        let symbol = Symbol::new(&name);
        let repeat = if cur.eat_punct("^") { Some(cur.number()?) } else { None };
        let arity = sig.arity(&symbol);
        let done: Term;
        if cur.eat_punct("(") {
            let Some(arity) = arity else {
                return Err(ParseError {
                    line,
                    column,
                    message: format!("unknown symbol `{name}`"),
                });
            };
            if repeat.is_some() && arity != 1 {
                return Err(ParseError {
                    line,
                    column,
                    message: format!("`{name}^N` needs a unary symbol, `{name}` has arity {arity}"),
                });
            }
            if cur.eat_punct(")") {
                if arity != 0 {
                    return Err(arity_error(line, column, &name, arity, 0));
                }
                done = Term::constant(symbol);
            } else {
                frames.push(Frame {
                    symbol,
                    arity,
                    repeat: repeat.unwrap_or(1),
                    args: Vec::new(),
                    line,
                    column,
                });
                continue;
            }
        } else if repeat.is_some() {
            return Err(cur.unexpected("`(` after `^N`"));
        } else {
            match arity {
                Some(0) => done = Term::constant(symbol),
                Some(a) => return Err(arity_error(line, column, &name, a, 0)),
                None if vars == VarMode::Allow => done = Term::var(name.as_str()),
                None => {
                    return Err(ParseError {
                        line,
                        column,
                        message: format!("unknown symbol `{name}` (terms must be ground)"),
                    })
                }
            }
        }
        let mut term = done;
        loop {
            let Some(frame) = frames.last_mut() else {
                return Ok(term);
            };
            frame.args.push(term);
            if cur.eat_punct(",") {
                break;
            }
            cur.expect_punct(")")?;
            let frame = frames.pop().expect("frame exists");
            if frame.args.len() != frame.arity {
                return Err(arity_error(
                    frame.line,
                    frame.column,
                    frame.symbol.as_str(),
                    frame.arity,
                    frame.args.len(),
                ));
            }
            let mut args = frame.args;
            term = if frame.repeat == 0 {
                args.pop().expect("unary")
            } else {
                let base = Term::app(frame.symbol.clone(), args);
                Term::iterate(frame.symbol, (frame.repeat - 1) as usize, base)
            };
        }
    }
}

fn arity_error(line: usize, column: usize, name: &str, expected: usize, found: usize) -> ParseError {
    ParseError {
        line,
        column,
        message: format!("arity mismatch: `{name}` expects {expected} argument(s), found {found}"),
    }
}

/// Parses a ground term over `sig`.
pub fn parse_term(sig: &Signature, text: &str) -> Result<Term, ParseError> {
    let mut cur = Cursor::new(text)?;
    let t = parse_term_at(&mut cur, sig, VarMode::Forbid)?;
    cur.expect_eof()?;
    Ok(t)
}

/// Parses a term in which undeclared bare identifiers are variables.
pub fn parse_open_term(sig: &Signature, text: &str) -> Result<Term, ParseError> {
    let mut cur = Cursor::new(text)?;
    let t = parse_term_at(&mut cur, sig, VarMode::Allow)?;
    cur.expect_eof()?;
    Ok(t)
}

fn parse_decls(cur: &mut Cursor, header: &str) -> Result<Vec<(String, usize, usize, usize)>, ParseError> {
    cur.expect_keyword(header)?;
    cur.expect_punct(":")?;
    let mut out = Vec::new();
    if cur.eat_punct(";") {
        return Ok(out);
    }
    loop {
        let (line, column) = (cur.toks[cur.pos].line, cur.toks[cur.pos].column);
        let name = cur.ident()?;
        cur.expect_punct("/")?;
        let arity = cur.number()? as usize;
        out.push((name, arity, line, column));
        if cur.eat_punct(";") {
            return Ok(out);
        }
        cur.expect_punct(",")?;
    }
}

/// Parses and validates a program.
pub fn parse_program(text: &str) -> Result<Program, LoadError> {
    let (sig, rules) = parse_program_parts(text)?;
    Ok(Program::new(sig, rules)?)
}

/// Parses the signature and rules without checking orthogonality, so that
/// every violation can be reported by [`crate::term::check_rules`].
pub fn parse_program_parts(text: &str) -> Result<(Signature, Vec<Rule>), ParseError> {
    let mut cur = Cursor::new(text)?;
    let mut sig = Signature::new();
    for (header, ctor) in [("constructors", true), ("operations", false)] {
        for (name, arity, line, column) in parse_decls(&mut cur, header)? {
            let added = if ctor {
                sig.add_constructor(name.as_str(), arity)
            } else {
                sig.add_operation(name.as_str(), arity)
            };
            added.map_err(|e| ParseError {
                line,
                column,
                message: e.to_string(),
            })?;
        }
    }
    cur.expect_keyword("rules")?;
    cur.expect_punct(":")?;
    let mut rules = Vec::new();
    while !matches!(cur.peek(), Tok::Eof) {
        let lhs = parse_term_at(&mut cur, &sig, VarMode::Allow)?;
        cur.expect_punct("->")?;
        let rhs = parse_term_at(&mut cur, &sig, VarMode::Allow)?;
        cur.expect_punct(";")?;
        rules.push(Rule::new(lhs, rhs));
    }
    Ok((sig, rules))
}
