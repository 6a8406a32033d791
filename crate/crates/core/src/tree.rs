//! Lock-free shared search tree.
//!
//! Every node carries its statistics and expansion state in atomics so that
//! any number of threads can select, expand and back up through the same tree
//! without locks:
//!
//! * `is_parent` is a single-winner latch: the thread whose `swap(true)`
//!   returns `false` is the only one that ever builds the children array.
//! * The winner stores `untried_moves` and then publishes `is_expandable`
//!   with release ordering. Readers acquire-load `is_expandable` before they
//!   touch the children, so they always see a fully built array.
//! * `untried_moves` doubles as a countdown: `add_child` hands out
//!   `children[k-1], ..., children[0]` via `fetch_sub`, each index at most
//!   once, and raises `is_fully_expanded` when index 0 is handed out.
//! * `w` and `n` are only accessed with sequentially consistent operations, so
//!   no backup is ever lost and a reader never sees a torn update order.
//!
//! Children arrays are never freed while the tree is alive. Nodes are only
//! reachable through a [`SearchTree`], which keeps the root boxed so that the
//! parent pointers stored in children stay valid.

use std::cell::UnsafeCell;
use std::fmt::Write as _;
use std::ptr;
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU64, Ordering};

use crate::problem::Move;

/// Fixed-point scale of the reward accumulator `w`.
pub const REWARD_SCALE: i64 = 1 << 16;

pub fn to_fixed(delta: f64) -> i64 {
    (delta * REWARD_SCALE as f64).round() as i64
}

pub struct Node {
    mv: Option<Move>,
    w: AtomicI64,
    n: AtomicU64,
    is_parent: AtomicBool,
    untried_moves: AtomicI64,
    is_expandable: AtomicBool,
    is_fully_expanded: AtomicBool,
    parent: *const Node,
    children: UnsafeCell<Box<[Node]>>,
}

// SAFETY: `children` is written exactly once, by the unique winner of the
// `is_parent` latch, before the release store of `is_expandable`; every read
// goes through `children()`, which acquire-loads that flag first. `parent`
// points at the node owning the array this node lives in, which outlives it.
unsafe impl Send for Node {}
unsafe impl Sync for Node {}

impl Node {
    fn new(mv: Option<Move>, parent: *const Node) -> Self {
        Self {
            mv,
            w: AtomicI64::new(0),
            n: AtomicU64::new(0),
            is_parent: AtomicBool::new(false),
            untried_moves: AtomicI64::new(-1),
            is_expandable: AtomicBool::new(false),
            is_fully_expanded: AtomicBool::new(false),
            parent,
            children: UnsafeCell::new(Box::new([])),
        }
    }

    /// Move leading from the parent to this node; `None` for the root.
    pub fn mv(&self) -> Option<Move> {
        self.mv
    }

    pub fn parent(&self) -> Option<&Node> {
        // SAFETY: see the `Sync` impl; the parent outlives its children.
        unsafe { self.parent.as_ref() }
    }

    /// Creates one child per move. Only the first caller ever does anything;
    /// it returns `true`, every other call returns `false`.
    pub fn init(&self, moves: &[Move]) -> bool {
        if self.is_parent.swap(true, Ordering::SeqCst) {
            return false;
        }
        let me: *const Node = self;
        let children: Box<[Node]> = moves.iter().map(|&m| Node::new(Some(m), me)).collect();
        // SAFETY: we hold the latch; nobody reads `children` before the
        // release store below.
        unsafe {
            *self.children.get() = children;
        }
        self.untried_moves.store(moves.len() as i64, Ordering::SeqCst);
        self.is_expandable.store(true, Ordering::Release);
        true
    }

    /// Hands out the next unexpanded child, or `self` if none is available
    /// (not yet initialized, or exhausted).
    pub fn add_child(&self) -> &Node {
        if !self.is_expandable.load(Ordering::Acquire) {
            return self;
        }
        let index = self.untried_moves.fetch_sub(1, Ordering::SeqCst) - 1;
        if index == 0 {
            self.is_fully_expanded.store(true, Ordering::SeqCst);
        }
        if index < 0 {
            self
        } else {
            &self.children()[index as usize]
        }
    }

    pub fn is_fully_expanded(&self) -> bool {
        self.is_fully_expanded.load(Ordering::SeqCst)
    }

    pub fn is_expandable(&self) -> bool {
        self.is_expandable.load(Ordering::Acquire)
    }

    pub fn is_parent(&self) -> bool {
        self.is_parent.load(Ordering::SeqCst)
    }

    /// Raw countdown value; -1 before init, negative once over-drawn.
    pub fn untried_count(&self) -> i64 {
        self.untried_moves.load(Ordering::SeqCst)
    }

    /// Published children; empty until `init` has completed.
    pub fn children(&self) -> &[Node] {
        if !self.is_expandable.load(Ordering::Acquire) {
            return &[];
        }
        // SAFETY: the acquire load above synchronizes with the release store
        // in `init`, after which the array is never written again.
        unsafe { &*self.children.get() }
    }

    /// UCT score as seen from the parent: `w/n + cp * sqrt(ln(N) / n)`, with
    /// `+inf` for unvisited nodes and `ln(0)` taken as 0.
    pub fn uct_value(&self, cp: f64) -> f64 {
        let w = self.w.load(Ordering::SeqCst);
        let n = self.n.load(Ordering::SeqCst);
        let parent_n = self.parent().map_or(0, |p| p.n.load(Ordering::SeqCst));
        if n == 0 {
            return f64::INFINITY;
        }
        let n = n as f64;
        let log_parent = if parent_n == 0 { 0.0 } else { (parent_n as f64).ln() };
        (w as f64 / n) / REWARD_SCALE as f64 + cp * (log_parent / n).sqrt()
    }

    pub fn update(&self, delta: f64) {
        self.w.fetch_add(to_fixed(delta), Ordering::SeqCst);
        self.n.fetch_add(1, Ordering::SeqCst);
    }

    pub fn visits(&self) -> u64 {
        self.n.load(Ordering::SeqCst)
    }

    /// Accumulated reward in fixed point (`REWARD_SCALE` per unit).
    pub fn reward_fixed(&self) -> i64 {
        self.w.load(Ordering::SeqCst)
    }

    pub fn mean_reward(&self) -> f64 {
        match self.visits() {
            0 => 0.0,
            n => self.reward_fixed() as f64 / n as f64 / REWARD_SCALE as f64,
        }
    }

    pub fn depth(&self) -> usize {
        let mut depth = 0;
        let mut cur = self.parent();
        while let Some(p) = cur {
            depth += 1;
            cur = p.parent();
        }
        depth
    }

    /// Moves on the path from the root to this node.
    pub fn path(&self) -> Vec<Move> {
        let mut moves = Vec::new();
        let mut cur = Some(self);
        while let Some(node) = cur {
            moves.extend(node.mv);
            cur = node.parent();
        }
        moves.reverse();
        moves
    }
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node")
            .field("mv", &self.mv)
            .field("n", &self.visits())
            .field("w", &self.reward_fixed())
            .field("untried", &self.untried_count())
            .field("fully_expanded", &self.is_fully_expanded())
            .field("children", &self.children().len())
            .finish()
    }
}

/// Owner of a search tree.
///
/// Search threads borrow the tree; it can only be dropped once they have all
/// been joined.
#[derive(Debug)]
pub struct SearchTree {
    root: Box<Node>,
}

impl Default for SearchTree {
    fn default() -> Self {
        Self::new()
    }
}

impl SearchTree {
    pub fn new() -> Self {
        Self {
            root: Box::new(Node::new(None, ptr::null())),
        }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Root child with the most visits; ties go to the lowest move label.
    pub fn best_child(&self) -> Option<&Node> {
        self.root
            .children()
            .iter()
            .max_by(|a, b| a.visits().cmp(&b.visits()).then_with(|| b.mv.cmp(&a.mv)))
    }

    /// Number of nodes, including children handed out or not.
    pub fn node_count(&self) -> usize {
        let mut count = 0;
        let mut stack = vec![self.root()];
        while let Some(node) = stack.pop() {
            count += 1;
            stack.extend(node.children());
        }
        count
    }

    /// Deepest visited node.
    pub fn max_depth(&self) -> usize {
        let mut deepest = 0;
        let mut stack = vec![(self.root(), 0usize)];
        while let Some((node, depth)) = stack.pop() {
            if node.visits() > 0 {
                deepest = deepest.max(depth);
            }
            stack.extend(node.children().iter().map(|c| (c, depth + 1)));
        }
        deepest
    }

    /// Depth-first text dump, one line per node:
    /// `<indent><move> n=<visits> w=<fixed-point reward> fe=<0|1>`, indented
    /// two spaces per level, children in array order. The root prints as `root`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![(self.root(), 0usize)];
        while let Some((node, depth)) = stack.pop() {
            let label = node.mv.map_or_else(|| "root".to_string(), |m| m.to_string());
            let _ = writeln!(
                out,
                "{:indent$}{label} n={} w={} fe={}",
                "",
                node.visits(),
                node.reward_fixed(),
                u8::from(node.is_fully_expanded()),
                indent = depth * 2
            );
            stack.extend(node.children().iter().rev().map(|c| (c, depth + 1)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serial_init_builds_children_once() {
        let tree = SearchTree::new();
        let root = tree.root();
        assert!(root.init(&[4, 5, 6]));
        assert_eq!(root.children().len(), 3);
        assert_eq!(root.untried_count(), 3);
        assert!(root.is_expandable());
        assert!(!root.init(&[7]));
        assert_eq!(root.children().iter().map(|c| c.mv()).collect::<Vec<_>>(), vec![Some(4), Some(5), Some(6)]);
    }

    #[test]
    fn add_child_counts_down_and_exhausts() {
        let tree = SearchTree::new();
        let root = tree.root();
        assert!(ptr::eq(root.add_child(), root), "uninitialized node returns itself");
        root.init(&[10, 11, 12]);
        let a = root.add_child();
        assert_eq!(a.mv(), Some(12));
        assert!(!root.is_fully_expanded());
        assert_eq!(root.add_child().mv(), Some(11));
        assert!(!root.is_fully_expanded());
        assert_eq!(root.add_child().mv(), Some(10));
        assert!(root.is_fully_expanded());
        assert!(ptr::eq(root.add_child(), root));
        assert!(root.is_fully_expanded());
    }

    #[test]
    fn fresh_node_is_not_fully_expanded() {
        let tree = SearchTree::new();
        assert!(!tree.root().is_fully_expanded());
        assert!(tree.root().children().is_empty());
    }

    #[test]
    fn uct_value_cases() {
        let tree = SearchTree::new();
        let root = tree.root();
        root.init(&[0, 1]);
        let child = &root.children()[0];
        assert_eq!(child.uct_value(1.0), f64::INFINITY);

        for _ in 0..5 {
            child.update(2.0);
        }
        assert_eq!(child.reward_fixed(), 10 * REWARD_SCALE);
        // Parent has no visits: ln(0) treated as 0.
        assert_eq!(child.uct_value(0.0), 2.0);
        assert_eq!(child.uct_value(3.0), 2.0);

        let other = &root.children()[1];
        other.update(1.0);
        for _ in 0..3 {
            root.update(0.0);
        }
        // 1 + sqrt(ln 3 / 1)
        let expected = 1.0 + (3f64).ln().sqrt();
        assert!((other.uct_value(1.0) - expected).abs() < 1e-12);
        assert!((other.uct_value(1.0) - 2.0482).abs() < 1e-4);
    }

    #[test]
    fn update_accumulates_fixed_point() {
        let tree = SearchTree::new();
        let root = tree.root();
        for _ in 0..1000 {
            root.update(1.0);
        }
        assert_eq!(root.visits(), 1000);
        assert_eq!(root.reward_fixed(), 1000 * REWARD_SCALE);

        let tree = SearchTree::new();
        tree.root().update(0.5);
        assert_eq!(tree.root().reward_fixed(), REWARD_SCALE / 2);
        assert_eq!(tree.root().visits(), 1);
    }

    #[test]
    fn parents_paths_and_depths() {
        let tree = SearchTree::new();
        let root = tree.root();
        root.init(&[3, 4]);
        let child = root.add_child();
        child.init(&[7]);
        let grandchild = child.add_child();
        assert_eq!(grandchild.path(), vec![4, 7]);
        assert_eq!(grandchild.depth(), 2);
        assert!(ptr::eq(grandchild.parent().unwrap(), child));
        assert!(root.parent().is_none());
    }

    #[test]
    fn best_child_prefers_visits_then_lowest_move() {
        let tree = SearchTree::new();
        let root = tree.root();
        root.init(&[2, 0, 1]);
        for child in root.children() {
            child.update(0.1);
        }
        assert_eq!(tree.best_child().unwrap().mv(), Some(0));
        root.children()[2].update(0.0);
        assert_eq!(tree.best_child().unwrap().mv(), Some(1));
    }

    #[test]
    fn dump_format() {
        let tree = SearchTree::new();
        let root = tree.root();
        root.init(&[0, 1]);
        let c = root.add_child();
        c.update(0.5);
        root.update(0.5);
        assert_eq!(
            tree.dump(),
            "root n=1 w=32768 fe=0\n  0 n=0 w=0 fe=0\n  1 n=1 w=32768 fe=0\n"
        );
        assert_eq!(tree.node_count(), 3);
        assert_eq!(tree.max_depth(), 1);
    }
}
