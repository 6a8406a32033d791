//! Search problems consumed by the MCTS stages.
//!
//! A [`SearchState`] is a move history plus whatever is needed to list the
//! remaining moves and score a finished history. Two problems are provided:
//! the Horner variable-ordering problem and a synthetic tree with hashed leaf
//! payoffs whose optimum can be found by enumeration.

mod horner;
mod synthetic;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::poly::PolyError;

pub use horner::{HornerProblem, HornerState};
pub use synthetic::{SyntheticProblem, SyntheticState, Workload};

/// A move label: a variable index for Horner, a branch index for synthetic.
pub type Move = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("illegal move {mv}: {reason}")]
    IllegalMove { mv: Move, reason: &'static str },
    #[error("cannot evaluate a non-terminal state")]
    NotTerminal,
    #[error("payoff table has a tied optimum")]
    TiedOptimum,
    #[error("invalid problem selector `{selector}`: {reason}")]
    Selector { selector: String, reason: String },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Score of a terminal state. `reward` is what the tree backs up; `cost` is
/// the raw objective when the problem has one (operation count for Horner).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub reward: f64,
    pub cost: Option<u64>,
}

pub trait SearchState: Clone + Send + Sync {
    /// Moves still legal from here, in a deterministic order.
    fn untried_moves(&self) -> Vec<Move>;

    fn set_move(&mut self, mv: Move) -> Result<(), ProblemError>;

    fn is_terminal(&self) -> bool;

    /// Pure function of the move history; errors on non-terminal states.
    fn evaluate(&self) -> Result<Outcome, ProblemError>;

    fn history(&self) -> &[Move];
}

/// A loaded problem, shared immutably by every state derived from it.
#[derive(Debug, Clone)]
pub enum Problem {
    Horner(Arc<HornerProblem>),
    Synthetic(Arc<SyntheticProblem>),
}

impl Problem {
    pub fn root_state(&self) -> ProblemState {
        match self {
            Problem::Horner(p) => ProblemState::Horner(HornerState::new(Arc::clone(p))),
            Problem::Synthetic(p) => ProblemState::Synthetic(SyntheticState::new(Arc::clone(p))),
        }
    }
}

/// Either problem's state behind one concrete type.
#[derive(Debug, Clone)]
pub enum ProblemState {
    Horner(HornerState),
    Synthetic(SyntheticState),
}

impl SearchState for ProblemState {
    fn untried_moves(&self) -> Vec<Move> {
        match self {
            ProblemState::Horner(s) => s.untried_moves(),
            ProblemState::Synthetic(s) => s.untried_moves(),
        }
    }

    fn set_move(&mut self, mv: Move) -> Result<(), ProblemError> {
        match self {
            ProblemState::Horner(s) => s.set_move(mv),
            ProblemState::Synthetic(s) => s.set_move(mv),
        }
    }

    fn is_terminal(&self) -> bool {
        match self {
            ProblemState::Horner(s) => s.is_terminal(),
            ProblemState::Synthetic(s) => s.is_terminal(),
        }
    }

    fn evaluate(&self) -> Result<Outcome, ProblemError> {
        match self {
            ProblemState::Horner(s) => s.evaluate(),
            ProblemState::Synthetic(s) => s.evaluate(),
        }
    }

    fn history(&self) -> &[Move] {
        match self {
            ProblemState::Horner(s) => s.history(),
            ProblemState::Synthetic(s) => s.history(),
        }
    }
}

/// Parsed form of a problem selector string:
/// `horner:<path>` or `synthetic:b=<int>,d=<int>,seed=<int>`.
///
/// The synthetic form also accepts `work_us=<int>` and `work=spin|sleep` to
/// attach an artificial per-evaluation cost.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Horner { path: PathBuf },
    Synthetic {
        branching: usize,
        depth: usize,
        seed: u64,
        workload: Workload,
    },
}

impl ProblemSpec {
    pub fn parse(selector: &str) -> Result<Self, ProblemError> {
        let bad = |reason: &str| ProblemError::Selector {
            selector: selector.to_string(),
            reason: reason.to_string(),
        };
        let (kind, rest) = selector.split_once(':').ok_or_else(|| bad("missing `:`"))?;
        match kind {
            "horner" if !rest.is_empty() => Ok(ProblemSpec::Horner { path: rest.into() }),
            "horner" => Err(bad("missing polynomial path")),
            "synthetic" => {
                let (mut b, mut d, mut seed) = (None, None, None);
                let mut work_us = 0u64;
                let mut sleep = false;
                for pair in rest.split(',').filter(|s| !s.is_empty()) {
                    let (key, value) = pair.split_once('=').ok_or_else(|| bad("expected key=value"))?;
                    let int = || value.parse::<u64>().map_err(|_| bad(&format!("`{key}` is not an integer")));
                    match key {
                        "b" => b = Some(int()? as usize),
                        "d" => d = Some(int()? as usize),
                        "seed" => seed = Some(int()?),
                        "work_us" => work_us = int()?,
                        "work" => {
                            sleep = match value {
                                "spin" => false,
                                "sleep" => true,
                                _ => return Err(bad("`work` must be spin or sleep")),
                            }
                        }
                        _ => return Err(bad(&format!("unknown key `{key}`"))),
                    }
                }
                let branching = b.ok_or_else(|| bad("missing b"))?;
                let depth = d.ok_or_else(|| bad("missing d"))?;
                if branching == 0 || depth == 0 {
                    return Err(bad("b and d must be at least 1"));
                }
                let duration = Duration::from_micros(work_us);
                let workload = match (work_us, sleep) {
                    (0, _) => Workload::None,
                    (_, false) => Workload::Spin(duration),
                    (_, true) => Workload::Sleep(duration),
                };
                Ok(ProblemSpec::Synthetic {
                    branching,
                    depth,
                    seed: seed.ok_or_else(|| bad("missing seed"))?,
                    workload,
                })
            }
            _ => Err(bad("kind must be `horner` or `synthetic`")),
        }
    }

    pub fn load(&self) -> Result<Problem, ProblemError> {
        match self {
            ProblemSpec::Horner { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| ProblemError::Io {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                let polynomial = crate::poly::parse_polynomial(&text)?;
                Ok(Problem::Horner(Arc::new(HornerProblem::new(polynomial)?)))
            }
            ProblemSpec::Synthetic {
                branching,
                depth,
                seed,
                workload,
            } => Ok(Problem::Synthetic(Arc::new(
                SyntheticProblem::new(*branching, *depth, *seed).with_workload(*workload),
            ))),
        }
    }
}
