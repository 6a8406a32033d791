use std::collections::HashMap;

use num_bigint::BigInt;
use num_traits::{One, Zero};

use super::{Evaluate, PolyError};

pub type NodeId = usize;

/// One node of an [`ExpressionDag`]. Operands always refer to earlier nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DagNode {
    Constant(BigInt),
    Variable(usize),
    Add(NodeId, NodeId),
    Multiply(NodeId, NodeId),
}

impl DagNode {
    pub fn operands(&self) -> Option<(NodeId, NodeId)> {
        match *self {
            DagNode::Add(a, b) | DagNode::Multiply(a, b) => Some((a, b)),
            DagNode::Constant(_) | DagNode::Variable(_) => None,
        }
    }

    pub fn is_operation(&self) -> bool {
        self.operands().is_some()
    }
}

/// Straight-line arithmetic program in topological order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExpressionDag {
    nodes: Vec<DagNode>,
    roots: Vec<NodeId>,
}

impl ExpressionDag {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a node.
    ///
    /// # Panics
    ///
    /// If an operand does not refer to an existing node.
    pub fn push(&mut self, node: DagNode) -> NodeId {
        if let Some((a, b)) = node.operands() {
            assert!(
                a < self.nodes.len() && b < self.nodes.len(),
                "operands must reference earlier nodes"
            );
        }
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    pub fn constant(&mut self, value: impl Into<BigInt>) -> NodeId {
        self.push(DagNode::Constant(value.into()))
    }

    pub fn variable(&mut self, index: usize) -> NodeId {
        self.push(DagNode::Variable(index))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(DagNode::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(DagNode::Multiply(a, b))
    }

    pub fn add_root(&mut self, id: NodeId) {
        assert!(id < self.nodes.len(), "root must reference an existing node");
        self.roots.push(id);
    }

    pub fn nodes(&self) -> &[DagNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &DagNode {
        &self.nodes[id]
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn is_zero(&self, id: NodeId) -> bool {
        matches!(&self.nodes[id], DagNode::Constant(c) if c.is_zero())
    }

    pub(crate) fn is_one(&self, id: NodeId) -> bool {
        matches!(&self.nodes[id], DagNode::Constant(c) if c.is_one())
    }

    /// Marks every node reachable from a root.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<NodeId> = self.roots.clone();
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id], true) {
                continue;
            }
            if let Some((a, b)) = self.nodes[id].operands() {
                stack.push(a);
                stack.push(b);
            }
        }
        seen
    }

    /// Values of all roots at `point`.
    pub fn evaluate_roots(&self, point: &[BigInt]) -> Result<Vec<BigInt>, PolyError> {
        let reachable = self.reachable();
        let mut values: Vec<Option<BigInt>> = vec![None; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            if !reachable[id] {
                continue;
            }
            let value = match node {
                DagNode::Constant(c) => c.clone(),
                DagNode::Variable(v) => point.get(*v).cloned().ok_or(PolyError::MissingAssignment(*v))?,
                DagNode::Add(a, b) => operand(&values, *a) + operand(&values, *b),
                DagNode::Multiply(a, b) => operand(&values, *a) * operand(&values, *b),
            };
            values[id] = Some(value);
        }
        Ok(self.roots.iter().map(|&r| operand(&values, r).clone()).collect())
    }
}

fn operand(values: &[Option<BigInt>], id: NodeId) -> &BigInt {
    values[id].as_ref().expect("operands are evaluated before their users")
}

impl Evaluate for ExpressionDag {
    /// Value of the first root; a DAG without roots is the zero polynomial.
    fn evaluate(&self, point: &[BigInt]) -> Result<BigInt, PolyError> {
        Ok(self.evaluate_roots(point)?.into_iter().next().unwrap_or_else(BigInt::zero))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct OpCount {
    pub multiplications: usize,
    pub additions: usize,
    pub total: usize,
}

/// Counts each reachable add/multiply node once.
pub fn count_ops(dag: &ExpressionDag) -> OpCount {
    let mut count = OpCount::default();
    for (node, live) in dag.nodes.iter().zip(dag.reachable()) {
        if !live {
            continue;
        }
        match node {
            DagNode::Add(..) => count.additions += 1,
            DagNode::Multiply(..) => count.multiplications += 1,
            _ => {}
        }
    }
    count.total = count.additions + count.multiplications;
    count
}

/// Merges structurally identical subexpressions and drops unreachable nodes.
///
/// Operand order is significant: `a + b` and `b + a` stay distinct.
pub fn cse(dag: &ExpressionDag) -> ExpressionDag {
    let reachable = dag.reachable();
    let mut out = ExpressionDag::new();
    let mut table: HashMap<DagNode, NodeId> = HashMap::with_capacity(dag.nodes.len());
    let mut remap = vec![usize::MAX; dag.nodes.len()];
    for (id, node) in dag.nodes.iter().enumerate() {
        if !reachable[id] {
            continue;
        }
        let key = match node {
            DagNode::Add(a, b) => DagNode::Add(remap[*a], remap[*b]),
            DagNode::Multiply(a, b) => DagNode::Multiply(remap[*a], remap[*b]),
            leaf => leaf.clone(),
        };
        remap[id] = match table.get(&key) {
            Some(&existing) => existing,
            None => {
                let new_id = out.push(key.clone());
                table.insert(key, new_id);
                new_id
            }
        };
    }
    out.roots = dag.roots.iter().map(|&r| remap[r]).collect();
    out
}
