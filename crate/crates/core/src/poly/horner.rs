use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::Zero;

use super::{ExpressionDag, Monomial, NodeId, PolyError, Polynomial};

/// An ordering of variables for multivariate Horner factoring. Partial orders
/// are representable; [`horner_transform`] requires a complete one.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HornerScheme {
    order: Vec<usize>,
}

impl HornerScheme {
    pub fn new(order: Vec<usize>) -> Self {
        Self { order }
    }

    pub fn identity(nvars: usize) -> Self {
        Self::new((0..nvars).collect())
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// True when the order is a permutation of `0..nvars`.
    pub fn is_complete_for(&self, nvars: usize) -> bool {
        if self.order.len() != nvars {
            return false;
        }
        let mut seen = vec![false; nvars];
        self.order
            .iter()
            .all(|&v| v < nvars && !std::mem::replace(&mut seen[v], true))
    }
}

/// Factors `p` recursively by the variables of `scheme`, outermost first.
///
/// At each level the polynomial is split into coefficient polynomials
/// `c_e` of the current variable `x` and rebuilt as
/// `((c_{e1} * x^(e1-e2) + c_{e2}) * x^(e2-e3) + ...) * x^{ek}`, with every
/// `c_e` transformed by the remaining variables. Powers become chained
/// multiplications; multiplying by the constant 1 is elided.
pub fn horner_transform(p: &Polynomial, scheme: &HornerScheme) -> Result<ExpressionDag, PolyError> {
    if !scheme.is_complete_for(p.nvars()) {
        return Err(PolyError::IncompleteScheme {
            order: scheme.order.clone(),
            nvars: p.nvars(),
        });
    }
    let mut builder = Builder {
        dag: ExpressionDag::new(),
        order: &scheme.order,
    };
    let root = if p.is_zero() {
        builder.dag.constant(0)
    } else {
        builder.build(p.terms().iter().collect(), 0)
    };
    builder.dag.add_root(root);
    Ok(builder.dag)
}

struct Builder<'a> {
    dag: ExpressionDag,
    order: &'a [usize],
}

impl<'a> Builder<'a> {
    fn build(&mut self, terms: Vec<&Monomial>, level: usize) -> NodeId {
        if level == self.order.len() {
            // Canonical input leaves at most one constant per group.
            let sum: BigInt = terms.iter().map(|t| t.coefficient()).fold(BigInt::zero(), |a, b| a + b);
            return self.dag.constant(sum);
        }
        let var = self.order[level];
        let mut groups: BTreeMap<u32, Vec<&Monomial>> = BTreeMap::new();
        for term in terms {
            groups.entry(term.exponent(var)).or_default().push(term);
        }
        if groups.len() == 1 && groups.contains_key(&0) {
            let group = groups.remove(&0).unwrap_or_default();
            return self.build(group, level + 1);
        }

        let mut acc: Option<(NodeId, u32)> = None;
        for (exp, group) in groups.into_iter().rev() {
            let coefficient = self.build(group, level + 1);
            acc = Some(match acc {
                None => (coefficient, exp),
                Some((node, prev)) => {
                    let shifted = self.mul_power(node, var, prev - exp);
                    (self.add(shifted, coefficient), exp)
                }
            });
        }
        let (node, lowest) = acc.expect("at least one group");
        if lowest > 0 {
            self.mul_power(node, var, lowest)
        } else {
            node
        }
    }

    fn mul_power(&mut self, node: NodeId, var: usize, exp: u32) -> NodeId {
        debug_assert!(exp > 0);
        let mut power = self.dag.variable(var);
        for _ in 1..exp {
            let x = self.dag.variable(var);
            power = self.dag.mul(power, x);
        }
        self.mul(node, power)
    }

    fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        if self.dag.is_one(a) {
            b
        } else if self.dag.is_one(b) {
            a
        } else {
            self.dag.mul(a, b)
        }
    }

    fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        if self.dag.is_zero(a) {
            b
        } else if self.dag.is_zero(b) {
            a
        } else {
            self.dag.add(a, b)
        }
    }
}
