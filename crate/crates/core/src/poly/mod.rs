//! Multivariate polynomials with exact integer coefficients, their Horner
//! transformation into expression DAGs, and common subexpression elimination.
//!
//! The pipeline used by the Horner search domain is
//! `horner_transform -> cse -> count_ops`; [`evaluate`](Evaluate::evaluate)
//! serves as the exact oracle that every transformation preserves the value of
//! the input polynomial.

mod dag;
mod horner;
mod parse;
mod random;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

pub use dag::{count_ops, cse, DagNode, ExpressionDag, NodeId, OpCount};
pub use horner::{horner_transform, HornerScheme};
pub use parse::{parse_polynomial, parse_polynomial_with_vars};
pub use random::random_polynomial;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown variable `{name}` at byte {pos}")]
    UnknownVariable { name: String, pos: usize },
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("variable index {index} out of range for {nvars} variables")]
    VariableOutOfRange { index: usize, nvars: usize },
    #[error("no value assigned to variable {0}")]
    MissingAssignment(usize),
    #[error("Horner scheme {order:?} is not a complete ordering of {nvars} variables")]
    IncompleteScheme { order: Vec<usize>, nvars: usize },
    #[error("cannot draw {requested} distinct monomials, only {available} exist")]
    TooManyTerms { requested: usize, available: u128 },
    #[error("invalid random polynomial shape: {0}")]
    InvalidShape(String),
}

/// A variable of a polynomial: its dense index and display name.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Variable {
    pub index: usize,
    pub name: String,
}

/// A single term `c * x_i^e_i * ...`. Zero exponents are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    coefficient: BigInt,
    exponents: BTreeMap<usize, u32>,
}

impl Monomial {
    pub fn new(coefficient: impl Into<BigInt>, exponents: impl IntoIterator<Item = (usize, u32)>) -> Self {
        let mut map = BTreeMap::new();
        for (var, exp) in exponents {
            if exp > 0 {
                *map.entry(var).or_insert(0) += exp;
            }
        }
        Self {
            coefficient: coefficient.into(),
            exponents: map,
        }
    }

    pub fn constant(value: impl Into<BigInt>) -> Self {
        Self::new(value, [])
    }

    pub fn coefficient(&self) -> &BigInt {
        &self.coefficient
    }

    pub fn exponents(&self) -> &BTreeMap<usize, u32> {
        &self.exponents
    }

    pub fn exponent(&self, var: usize) -> u32 {
        self.exponents.get(&var).copied().unwrap_or(0)
    }

    pub fn degree(&self) -> u32 {
        self.exponents.values().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.exponents.is_empty()
    }
}

/// A multivariate polynomial in canonical form: like terms merged, zero terms
/// dropped, terms sorted by descending exponent vector (variable 0 most
/// significant).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    vars: Vec<String>,
    terms: Vec<Monomial>,
}

impl Polynomial {
    /// Builds a canonical polynomial over the named variables.
    pub fn new(vars: Vec<String>, terms: impl IntoIterator<Item = Monomial>) -> Result<Self, PolyError> {
        for (i, name) in vars.iter().enumerate() {
            if vars[..i].contains(name) {
                return Err(PolyError::DuplicateVariable(name.clone()));
            }
        }
        let nvars = vars.len();
        let mut merged: BTreeMap<Vec<(usize, u32)>, BigInt> = BTreeMap::new();
        for term in terms {
            if let Some((&index, _)) = term.exponents.iter().find(|(&v, _)| v >= nvars) {
                return Err(PolyError::VariableOutOfRange { index, nvars });
            }
            let key: Vec<(usize, u32)> = term.exponents.iter().map(|(&v, &e)| (v, e)).collect();
            *merged.entry(key).or_insert_with(BigInt::zero) += term.coefficient;
        }
        let mut terms: Vec<Monomial> = merged
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|(exps, c)| Monomial {
                coefficient: c,
                exponents: exps.into_iter().collect(),
            })
            .collect();
        terms.sort_by(|a, b| canonical_order(a, b, nvars));
        Ok(Self { vars, terms })
    }

    pub fn zero(vars: Vec<String>) -> Result<Self, PolyError> {
        Self::new(vars, [])
    }

    pub fn nvars(&self) -> usize {
        self.vars.len()
    }

    pub fn var_names(&self) -> &[String] {
        &self.vars
    }

    pub fn variables(&self) -> impl Iterator<Item = Variable> + '_ {
        self.vars.iter().enumerate().map(|(index, name)| Variable {
            index,
            name: name.clone(),
        })
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Same polynomial with the variable names replaced; indices are untouched.
    pub fn with_var_names(&self, vars: Vec<String>) -> Result<Self, PolyError> {
        if vars.len() != self.vars.len() {
            return Err(PolyError::InvalidShape(format!(
                "expected {} variable names, got {}",
                self.vars.len(),
                vars.len()
            )));
        }
        Self::new(vars, self.terms.iter().cloned())
    }
}

fn canonical_order(a: &Monomial, b: &Monomial, nvars: usize) -> Ordering {
    for v in 0..nvars {
        match b.exponent(v).cmp(&a.exponent(v)) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

/// Exact evaluation at an integer point, indexed by variable.
pub trait Evaluate {
    fn evaluate(&self, point: &[BigInt]) -> Result<BigInt, PolyError>;
}

impl Evaluate for Polynomial {
    fn evaluate(&self, point: &[BigInt]) -> Result<BigInt, PolyError> {
        if point.len() < self.nvars() {
            return Err(PolyError::MissingAssignment(point.len()));
        }
        let mut sum = BigInt::zero();
        for term in &self.terms {
            let mut value = term.coefficient.clone();
            for (&var, &exp) in &term.exponents {
                value *= point[var].pow(exp);
            }
            sum += value;
        }
        Ok(sum)
    }
}

impl fmt::Display for Polynomial {
    /// Prints in the grammar accepted by [`parse_polynomial`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, term) in self.terms.iter().enumerate() {
            let negative = term.coefficient.is_negative();
            match (i, negative) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let magnitude = term.coefficient.abs();
            let mut first = true;
            if !magnitude.is_one() || term.is_constant() {
                write!(f, "{magnitude}")?;
                first = false;
            }
            for (&var, &exp) in &term.exponents {
                if !first {
                    write!(f, "*")?;
                }
                first = false;
                write!(f, "{}", self.vars[var])?;
                if exp > 1 {
                    write!(f, "^{exp}")?;
                }
            }
        }
        Ok(())
    }
}
