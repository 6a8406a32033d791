#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Barrier, Condvar, Mutex};
use std::thread;

use pipesearch::problem::{Move, Outcome, ProblemError, SearchState, SyntheticProblem, SyntheticState};
use pipesearch::tree::{SearchTree, REWARD_SCALE};

pub fn synthetic(b: usize, d: usize, seed: u64) -> SyntheticState {
    SyntheticState::new(Arc::new(SyntheticProblem::new(b, d, seed)))
}

/// First move of the best leaf, found by enumerating every leaf.
pub fn optimal_first_move(problem: &SyntheticProblem) -> Move {
    let leaves = problem.leaves();
    let (path, _) = leaves
        .iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    assert_eq!(leaves.iter().filter(|(_, p)| *p == problem.optimum().unwrap().1).count(), 1);
    path[0]
}

struct RoundLog {
    won_init: bool,
    children_ptr: Option<usize>,
    handed_out: Vec<Move>,
    root_updates: u64,
    child_updates: Vec<(Move, u64)>,
}

/// Hammers fresh nodes with `threads` threads calling init, add_child and
/// update in thread-dependent orders, `rounds` times, and checks every
/// round for exactly one initializer, one shared children array, each child
/// handed out exactly once, and no lost updates.
pub fn hammer(rounds: usize, threads: usize, children: usize) -> Result<(), String> {
    const BATCH: usize = 500;
    let moves: Vec<Move> = (0..children).collect();
    let mut done = 0;
    while done < rounds {
        let batch = BATCH.min(rounds - done);
        let trees: Vec<SearchTree> = (0..batch).map(|_| SearchTree::new()).collect();
        let barrier = Barrier::new(threads);
        let logs: Vec<Vec<RoundLog>> = thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let (trees, barrier, moves) = (&trees, &barrier, &moves);
                    scope.spawn(move || {
                        let mut logs = Vec::with_capacity(trees.len());
                        for tree in trees {
                            barrier.wait();
                            let root = tree.root();
                            let mut log = RoundLog {
                                won_init: false,
                                children_ptr: None,
                                handed_out: Vec::new(),
                                root_updates: 0,
                                child_updates: Vec::new(),
                            };
                            // Odd threads try to draw before initializing.
                            if t % 2 == 1 {
                                let c = root.add_child();
                                if !std::ptr::eq(c, root) {
                                    log.handed_out.push(c.mv().unwrap());
                                }
                            }
                            log.won_init = root.init(moves);
                            loop {
                                let c = root.add_child();
                                if std::ptr::eq(c, root) {
                                    break;
                                }
                                let mv = c.mv().unwrap();
                                log.handed_out.push(mv);
                                c.update(1.0);
                                log.child_updates.push((mv, 1));
                                root.update(0.5);
                                log.root_updates += 1;
                                if t % 3 == 0 {
                                    thread::yield_now();
                                }
                            }
                            for _ in 0..(t % 4) {
                                root.update(0.25);
                                log.root_updates += 1;
                            }
                            // A losing initializer may finish before the winner
                            // publishes; an empty view is not a second array.
                            let seen = root.children();
                            log.children_ptr = (!seen.is_empty()).then(|| seen.as_ptr() as usize);
                            logs.push(log);
                        }
                        logs
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });

        for (i, tree) in trees.iter().enumerate() {
            let round = done + i;
            let root = tree.root();
            let per_thread: Vec<&RoundLog> = logs.iter().map(|l| &l[i]).collect();
            let winners = per_thread.iter().filter(|l| l.won_init).count();
            if winners != 1 {
                return Err(format!("round {round}: {winners} threads won init"));
            }
            let ptr = root.children().as_ptr() as usize;
            if per_thread.iter().any(|l| l.children_ptr.is_some_and(|p| p != ptr)) || root.children().len() != children {
                return Err(format!("round {round}: threads saw different children arrays"));
            }
            let mut counts = vec![0usize; children];
            for l in &per_thread {
                for &mv in &l.handed_out {
                    counts[mv] += 1;
                }
            }
            if let Some(mv) = counts.iter().position(|&c| c != 1) {
                return Err(format!("round {round}: child {mv} handed out {} times", counts[mv]));
            }
            if !root.is_fully_expanded() {
                return Err(format!("round {round}: root not fully expanded"));
            }
            let root_updates: u64 = per_thread.iter().map(|l| l.root_updates).sum();
            if root.visits() != root_updates {
                return Err(format!("round {round}: root n={} after {root_updates} updates", root.visits()));
            }
            let expected_w: i64 = per_thread
                .iter()
                .map(|l| {
                    let drawn = l.child_updates.len() as i64;
                    drawn * REWARD_SCALE / 2 + (l.root_updates as i64 - drawn) * REWARD_SCALE / 4
                })
                .sum();
            if root.reward_fixed() != expected_w {
                return Err(format!("round {round}: root w={} expected {expected_w}", root.reward_fixed()));
            }
            let mut child_updates = vec![0u64; children];
            for l in &per_thread {
                for &(mv, k) in &l.child_updates {
                    child_updates[mv] += k;
                }
            }
            for child in root.children() {
                let mv = child.mv().unwrap();
                if child.visits() != child_updates[mv] {
                    return Err(format!("round {round}: child {mv} n={} expected {}", child.visits(), child_updates[mv]));
                }
            }
        }
        done += batch;
    }
    Ok(())
}

/// A synthetic state whose evaluation blocks until the gate opens.
#[derive(Clone)]
pub struct GatedState {
    inner: SyntheticState,
    gate: Arc<Gate>,
}

#[derive(Default)]
pub struct Gate {
    open: Mutex<bool>,
    changed: Condvar,
    pub waiting: AtomicUsize,
    pub evaluated: AtomicUsize,
}

impl Gate {
    pub fn open(&self) {
        *self.open.lock().unwrap() = true;
        self.changed.notify_all();
    }

    /// Blocks until `n` evaluations are waiting at the gate.
    pub fn wait_for(&self, n: usize) {
        while self.waiting.load(Ordering::SeqCst) < n {
            thread::yield_now();
        }
    }
}

impl GatedState {
    pub fn new(inner: SyntheticState) -> (Self, Arc<Gate>) {
        let gate = Arc::new(Gate::default());
        (
            Self {
                inner,
                gate: Arc::clone(&gate),
            },
            gate,
        )
    }
}

impl SearchState for GatedState {
    fn untried_moves(&self) -> Vec<Move> {
        self.inner.untried_moves()
    }

    fn set_move(&mut self, mv: Move) -> Result<(), ProblemError> {
        self.inner.set_move(mv)
    }

    fn is_terminal(&self) -> bool {
        self.inner.is_terminal()
    }

    fn evaluate(&self) -> Result<Outcome, ProblemError> {
        self.gate.waiting.fetch_add(1, Ordering::SeqCst);
        let mut open = self.gate.open.lock().unwrap();
        while !*open {
            open = self.gate.changed.wait(open).unwrap();
        }
        drop(open);
        self.gate.evaluated.fetch_add(1, Ordering::SeqCst);
        self.inner.evaluate()
    }

    fn history(&self) -> &[Move] {
        self.inner.history()
    }
}
