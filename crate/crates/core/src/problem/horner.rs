use std::sync::Arc;

use crate::poly::{count_ops, cse, horner_transform, HornerScheme, Polynomial};

use super::{Move, Outcome, ProblemError, SearchState};

/// A polynomial together with its reference cost: the operation count of the
/// identity-order Horner scheme after CSE.
#[derive(Debug)]
pub struct HornerProblem {
    polynomial: Polynomial,
    baseline_ops: u64,
}

impl HornerProblem {
    pub fn new(polynomial: Polynomial) -> Result<Self, ProblemError> {
        let baseline_ops = ops_for_order(&polynomial, (0..polynomial.nvars()).collect())?;
        Ok(Self {
            polynomial,
            baseline_ops,
        })
    }

    pub fn polynomial(&self) -> &Polynomial {
        &self.polynomial
    }

    pub fn baseline_ops(&self) -> u64 {
        self.baseline_ops
    }

    pub fn ops_for_order(&self, order: &[usize]) -> Result<u64, ProblemError> {
        ops_for_order(&self.polynomial, order.to_vec())
    }

    /// `baseline / max(ops, 1)`: 1.0 at the baseline, larger for cheaper schemes.
    pub fn reward_for_ops(&self, ops: u64) -> f64 {
        self.baseline_ops as f64 / ops.max(1) as f64
    }
}

fn ops_for_order(p: &Polynomial, order: Vec<usize>) -> Result<u64, ProblemError> {
    let dag = horner_transform(p, &HornerScheme::new(order))?;
    Ok(count_ops(&cse(&dag)).total as u64)
}

/// A partial Horner scheme: the variables chosen so far, outermost first.
#[derive(Debug, Clone)]
pub struct HornerState {
    problem: Arc<HornerProblem>,
    chosen: Vec<usize>,
}

impl HornerState {
    pub fn new(problem: Arc<HornerProblem>) -> Self {
        let capacity = problem.polynomial.nvars();
        Self {
            problem,
            chosen: Vec::with_capacity(capacity),
        }
    }

    pub fn problem(&self) -> &Arc<HornerProblem> {
        &self.problem
    }

    pub fn chosen(&self) -> &[usize] {
        &self.chosen
    }
}

impl SearchState for HornerState {
    fn untried_moves(&self) -> Vec<Move> {
        (0..self.problem.polynomial.nvars())
            .filter(|v| !self.chosen.contains(v))
            .collect()
    }

    fn set_move(&mut self, mv: Move) -> Result<(), ProblemError> {
        if mv >= self.problem.polynomial.nvars() {
            return Err(ProblemError::IllegalMove {
                mv,
                reason: "no such variable",
            });
        }
        if self.chosen.contains(&mv) {
            return Err(ProblemError::IllegalMove {
                mv,
                reason: "variable already chosen",
            });
        }
        self.chosen.push(mv);
        Ok(())
    }

    fn is_terminal(&self) -> bool {
        self.chosen.len() == self.problem.polynomial.nvars()
    }

    fn evaluate(&self) -> Result<Outcome, ProblemError> {
        if !self.is_terminal() {
            return Err(ProblemError::NotTerminal);
        }
        let ops = self.problem.ops_for_order(&self.chosen)?;
        Ok(Outcome {
            reward: self.problem.reward_for_ops(ops),
            cost: Some(ops),
        })
    }

    fn history(&self) -> &[Move] {
        &self.chosen
    }
}
