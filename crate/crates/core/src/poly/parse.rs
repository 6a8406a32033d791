//! Text grammar:
//!
//! ```text
//! expression := term (('+' | '-') term)*
//! term       := factor ('*' factor)*
//! factor     := INTEGER | IDENT ('^' INTEGER)?
//! IDENT      := [a-zA-Z][a-zA-Z0-9_]*
//! ```
//!
//! Whitespace is insignificant. A sign before the first term is also accepted
//! so that polynomials with a negative leading coefficient print and re-parse.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_traits::One;

use super::{Monomial, PolyError, Polynomial};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(BigInt),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, PolyError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => out.push((start, Tok::Plus)),
            b'-' => out.push((start, Tok::Minus)),
            b'*' => out.push((start, Tok::Star)),
            b'^' => out.push((start, Tok::Caret)),
            b'0'..=b'9' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let value = text[start..i].parse::<BigInt>().expect("digit run parses");
                out.push((start, Tok::Int(value)));
                continue;
            }
            c if c.is_ascii_alphabetic() => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(text[start..i].to_string())));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(PolyError::Syntax {
                    pos: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        }
        i += 1;
    }
    Ok(out)
}

struct RawTerm {
    coefficient: BigInt,
    factors: Vec<(String, u32, usize)>,
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn error(&self, message: impl Into<String>) -> PolyError {
        PolyError::Syntax {
            pos: self.offset(),
            message: message.into(),
        }
    }

    fn expression(&mut self) -> Result<Vec<RawTerm>, PolyError> {
        let mut terms = Vec::new();
        let mut negate = match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                true
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                false
            }
            _ => false,
        };
        loop {
            let mut term = self.term()?;
            if negate {
                term.coefficient = -term.coefficient;
            }
            terms.push(term);
            negate = match self.peek() {
                Some(Tok::Plus) => false,
                Some(Tok::Minus) => true,
                None => return Ok(terms),
                Some(_) => return Err(self.error("expected `+`, `-` or end of input")),
            };
            self.pos += 1;
        }
    }

    fn term(&mut self) -> Result<RawTerm, PolyError> {
        let mut term = RawTerm {
            coefficient: BigInt::one(),
            factors: Vec::new(),
        };
        self.factor(&mut term)?;
        while let Some(Tok::Star) = self.peek() {
            self.pos += 1;
            self.factor(&mut term)?;
        }
        Ok(term)
    }

    fn factor(&mut self, term: &mut RawTerm) -> Result<(), PolyError> {
        let at = self.offset();
        match self.toks.get(self.pos).map(|(_, t)| t.clone()) {
            Some(Tok::Int(value)) => {
                self.pos += 1;
                term.coefficient *= value;
                Ok(())
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                let mut exp = 1u32;
                if let Some(Tok::Caret) = self.peek() {
                    self.pos += 1;
                    match self.toks.get(self.pos).map(|(_, t)| t.clone()) {
                        Some(Tok::Int(value)) => {
                            exp = u32::try_from(&value).map_err(|_| self.error("exponent too large"))?;
                            self.pos += 1;
                        }
                        _ => return Err(self.error("expected integer exponent after `^`")),
                    }
                }
                term.factors.push((name, exp, at));
                Ok(())
            }
            _ => Err(self.error("expected integer or variable")),
        }
    }
}

fn parse_raw(text: &str) -> Result<Vec<RawTerm>, PolyError> {
    let toks = tokenize(text)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    parser.expression()
}

fn resolve(raw: Vec<RawTerm>, vars: Vec<String>) -> Result<Polynomial, PolyError> {
    let mut terms = Vec::with_capacity(raw.len());
    for term in raw {
        let mut exps = Vec::with_capacity(term.factors.len());
        for (name, exp, pos) in term.factors {
            let index = vars
                .iter()
                .position(|v| *v == name)
                .ok_or(PolyError::UnknownVariable { name, pos })?;
            exps.push((index, exp));
        }
        terms.push(Monomial::new(term.coefficient, exps));
    }
    Polynomial::new(vars, terms)
}

/// Parses a polynomial, numbering its variables in natural name order
/// (`x2` before `x10`), so the result does not depend on term order.
pub fn parse_polynomial(text: &str) -> Result<Polynomial, PolyError> {
    let raw = parse_raw(text)?;
    let mut vars: Vec<String> = Vec::new();
    for term in &raw {
        for (name, _, _) in &term.factors {
            if !vars.contains(name) {
                vars.push(name.clone());
            }
        }
    }
    vars.sort_by(|a, b| natural_cmp(a, b));
    resolve(raw, vars)
}

/// Parses against a fixed variable list; names outside it are rejected.
pub fn parse_polynomial_with_vars(text: &str, vars: &[String]) -> Result<Polynomial, PolyError> {
    resolve(parse_raw(text)?, vars.to_vec())
}

fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn chunks(s: &str) -> Vec<(bool, &str)> {
        let mut out = Vec::new();
        let mut start = 0;
        let bytes = s.as_bytes();
        for i in 1..=bytes.len() {
            if i == bytes.len() || bytes[i].is_ascii_digit() != bytes[start].is_ascii_digit() {
                out.push((bytes[start].is_ascii_digit(), &s[start..i]));
                start = i;
            }
        }
        out
    }
    let (ca, cb) = (chunks(a), chunks(b));
    for ((da, sa), (db, sb)) in ca.iter().zip(cb.iter()) {
        let ord = if *da && *db {
            let (ta, tb) = (sa.trim_start_matches('0'), sb.trim_start_matches('0'));
            ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb))
        } else {
            sa.cmp(sb)
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    ca.len().cmp(&cb.len()).then_with(|| a.cmp(b))
}
