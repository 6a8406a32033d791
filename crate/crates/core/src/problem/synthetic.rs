use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::seed;

use super::{Move, Outcome, ProblemError, SearchState};

/// Artificial cost attached to each evaluation, to make playouts heavy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Workload {
    #[default]
    None,
    /// Busy-wait: consumes a core for the duration.
    Spin(Duration),
    /// Blocking sleep: occupies the calling thread but not a core.
    Sleep(Duration),
}

impl Workload {
    fn run(self) {
        match self {
            Workload::None => {}
            Workload::Spin(d) => {
                let start = Instant::now();
                while start.elapsed() < d {
                    std::hint::spin_loop();
                }
            }
            Workload::Sleep(d) => std::thread::sleep(d),
        }
    }
}

/// A uniform tree of branching `b` and depth `d` whose `b^d` leaves carry
/// hashed payoffs in `[0, 1)`.
#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    branching: usize,
    depth: usize,
    seed: u64,
    workload: Workload,
}

impl SyntheticProblem {
    /// # Panics
    ///
    /// If `branching` or `depth` is zero.
    pub fn new(branching: usize, depth: usize, seed: u64) -> Self {
        assert!(branching >= 1 && depth >= 1, "branching and depth must be positive");
        Self {
            branching,
            depth,
            seed,
            workload: Workload::None,
        }
    }

    pub fn with_workload(mut self, workload: Workload) -> Self {
        self.workload = workload;
        self
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn workload(&self) -> Workload {
        self.workload
    }

    pub fn payoff(&self, path: &[Move]) -> f64 {
        let mut h = seed::mix64(self.seed ^ 0xA076_1D64_78BD_642F);
        for &m in path {
            h = seed::mix64(h ^ seed::mix64(m as u64 + 1));
        }
        seed::unit_interval(h)
    }

    /// Every leaf with its payoff, in lexicographic path order.
    pub fn leaves(&self) -> Vec<(Vec<Move>, f64)> {
        let count = self.branching.pow(self.depth as u32);
        (0..count)
            .map(|mut index| {
                let mut path = vec![0; self.depth];
                for slot in path.iter_mut().rev() {
                    *slot = index % self.branching;
                    index /= self.branching;
                }
                let payoff = self.payoff(&path);
                (path, payoff)
            })
            .collect()
    }

    /// The unique best leaf; a tie for the maximum is an error.
    pub fn optimum(&self) -> Result<(Vec<Move>, f64), ProblemError> {
        let leaves = self.leaves();
        let best = leaves.iter().map(|(_, p)| *p).fold(f64::NEG_INFINITY, f64::max);
        let mut winners = leaves.into_iter().filter(|(_, p)| *p == best);
        let winner = winners.next().expect("at least one leaf");
        if winners.next().is_some() {
            return Err(ProblemError::TiedOptimum);
        }
        Ok(winner)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticState {
    problem: Arc<SyntheticProblem>,
    path: Vec<Move>,
}

impl SyntheticState {
    pub fn new(problem: Arc<SyntheticProblem>) -> Self {
        let depth = problem.depth;
        Self {
            problem,
            path: Vec::with_capacity(depth),
        }
    }

    pub fn path(&self) -> &[Move] {
        &self.path
    }
}

impl SearchState for SyntheticState {
    fn untried_moves(&self) -> Vec<Move> {
        if self.is_terminal() {
            Vec::new()
        } else {
            (0..self.problem.branching).collect()
        }
    }

    fn set_move(&mut self, mv: Move) -> Result<(), ProblemError> {
        if self.is_terminal() {
            return Err(ProblemError::IllegalMove {
                mv,
                reason: "state is terminal",
            });
        }
        if mv >= self.problem.branching {
            return Err(ProblemError::IllegalMove {
                mv,
                reason: "branch out of range",
            });
        }
        self.path.push(mv);
        Ok(())
    }

    fn is_terminal(&self) -> bool {
        self.path.len() == self.problem.depth
    }

    fn evaluate(&self) -> Result<Outcome, ProblemError> {
        if !self.is_terminal() {
            return Err(ProblemError::NotTerminal);
        }
        self.problem.workload.run();
        Ok(Outcome {
            reward: self.problem.payoff(&self.path),
            cost: None,
        })
    }

    fn history(&self) -> &[Move] {
        &self.path
    }
}
