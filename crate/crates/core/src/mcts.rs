//! The MCTS stage functions and the sequential driver.
//!
//! One iteration is `select -> expand -> random_simulation -> evaluation ->
//! backup`, each a function of a [`Token`]. The functions touch shared state
//! only through the tree's atomics, so the schedulers can run them from any
//! thread.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::problem::{Move, Outcome, ProblemError, SearchState};
use crate::sched::PipelineStats;
use crate::seed;
use crate::tree::{Node, SearchTree};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("root state is terminal; there is nothing to search")]
    TerminalRoot,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("pipeline did not drain within {timeout_ms} ms ({completed} of {issued} issued tokens completed)")]
    DrainTimeout { timeout_ms: u128, issued: u64, completed: u64 },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Number of playouts to complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBudget {
    max_playouts: u64,
}

impl SearchBudget {
    pub fn new(max_playouts: u64) -> Result<Self, SearchError> {
        if max_playouts == 0 {
            return Err(SearchError::InvalidConfig("budget must be at least 1 playout".into()));
        }
        Ok(Self { max_playouts })
    }

    pub fn max_playouts(&self) -> u64 {
        self.max_playouts
    }
}

/// Early-stop condition: the search ends once a playout reaches it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// Reward at least this value.
    Reward(f64),
    /// Cost (operation count) at most this value.
    Cost(u64),
}

impl Target {
    pub fn is_hit(&self, outcome: &Outcome) -> bool {
        match *self {
            Target::Reward(r) => outcome.reward >= r,
            Target::Cost(c) => outcome.cost.is_some_and(|ops| ops <= c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub budget: SearchBudget,
    pub cp: f64,
    pub seed: u64,
    /// When set, the budget is a cap and the run stops at the first playout
    /// that reaches the target.
    pub target: Option<Target>,
}

impl SearchConfig {
    pub fn new(max_playouts: u64, cp: f64, seed: u64) -> Result<Self, SearchError> {
        if !(cp.is_finite() && cp >= 0.0) {
            return Err(SearchError::InvalidConfig(format!("cp must be a non-negative number, got {cp}")));
        }
        Ok(Self {
            budget: SearchBudget::new(max_playouts)?,
            cp,
            seed,
            target: None,
        })
    }

    pub fn with_target(mut self, target: Target) -> Self {
        self.target = Some(target);
        self
    }
}

/// Generator for one playout, derived from the root seed, the token id and
/// the playout ordinal.
pub fn playout_rng(root_seed: u64, token_id: usize, ordinal: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed::derive(&[root_seed, token_id as u64, ordinal]))
}

/// A path through the tree in progress: the current node, the state reached
/// by replaying the path, and the playout's reward once evaluated.
#[derive(Debug)]
pub struct Token<'t, S> {
    pub id: usize,
    /// Issue order of the current playout.
    pub ordinal: u64,
    pub node: &'t Node,
    pub state: S,
    pub outcome: Option<Outcome>,
    rng: ChaCha8Rng,
}

impl<'t, S: SearchState> Token<'t, S> {
    pub fn new(id: usize, root: &'t Node, root_state: &S, root_seed: u64, ordinal: u64) -> Self {
        Self {
            id,
            ordinal,
            node: root,
            state: root_state.clone(),
            outcome: None,
            rng: playout_rng(root_seed, id, ordinal),
        }
    }

    /// Resets the token at the root for a new playout, reusing its buffers.
    pub fn reissue(&mut self, root: &'t Node, root_state: &S, root_seed: u64, ordinal: u64) {
        self.ordinal = ordinal;
        self.node = root;
        self.state.clone_from(root_state);
        self.outcome = None;
        self.rng = playout_rng(root_seed, self.id, ordinal);
    }

    pub fn delta(&self) -> Option<f64> {
        self.outcome.map(|o| o.reward)
    }
}

/// Child with the highest UCT value; ties go to the lowest index.
pub fn best_uct_child(node: &Node, cp: f64) -> Option<&Node> {
    let mut best: Option<(&Node, f64)> = None;
    for child in node.children() {
        let value = child.uct_value(cp);
        if best.is_none_or(|(_, v)| value > v) {
            best = Some((child, value));
        }
    }
    best.map(|(child, _)| child)
}

/// Descends from the token's node while nodes are fully expanded.
pub fn select<S: SearchState>(token: &mut Token<'_, S>, cp: f64) {
    while token.node.is_fully_expanded() {
        let Some(child) = best_uct_child(token.node, cp) else {
            break;
        };
        token.node = child;
        apply(&mut token.state, child);
    }
}

/// Initializes the node (once, by whichever token gets there first) and
/// moves the token to the next unexpanded child, if any is left.
pub fn expand<S: SearchState>(token: &mut Token<'_, S>) {
    if token.state.is_terminal() {
        return;
    }
    let node = token.node;
    if !node.is_parent() {
        let mut moves = token.state.untried_moves();
        moves.shuffle(&mut token.rng);
        node.init(&moves);
    }
    let child = node.add_child();
    if !std::ptr::eq(child, node) {
        token.node = child;
        apply(&mut token.state, child);
    }
}

/// Plays uniformly random moves on the state until it is terminal. The tree
/// is not touched.
pub fn random_simulation<S: SearchState>(token: &mut Token<'_, S>) {
    while !token.state.is_terminal() {
        let moves = token.state.untried_moves();
        let &mv = moves.choose(&mut token.rng).expect("non-terminal state has a legal move");
        token
            .state
            .set_move(mv)
            .expect("move listed by untried_moves must be legal");
    }
}

pub fn evaluation<S: SearchState>(token: &mut Token<'_, S>) -> Result<(), ProblemError> {
    token.outcome = Some(token.state.evaluate()?);
    Ok(())
}

/// Adds the token's reward to every node from its node up to the root. A
/// token without a reward (failed evaluation) updates nothing.
pub fn backup<S: SearchState>(token: &mut Token<'_, S>) {
    let Some(delta) = token.delta() else {
        return;
    };
    let mut node = token.node;
    loop {
        node.update(delta);
        match node.parent() {
            Some(parent) => node = parent,
            None => break,
        }
    }
    token.node = node;
}

fn apply<S: SearchState>(state: &mut S, child: &Node) {
    let mv = child.mv().expect("non-root node has a move");
    state
        .set_move(mv)
        .expect("tree move must be legal in the replayed state");
}

/// Runs one full iteration on the token.
pub fn iterate<S: SearchState>(token: &mut Token<'_, S>, cp: f64) -> Result<(), ProblemError> {
    select(token, cp);
    expand(token);
    random_simulation(token);
    evaluation(token)?;
    backup(token);
    Ok(())
}

/// Best terminal history seen during a search.
#[derive(Debug, Clone, PartialEq)]
pub struct BestFound {
    pub reward: f64,
    pub cost: Option<u64>,
    pub moves: Vec<Move>,
    pub ordinal: u64,
}

/// Tracks the best playout and the first-hit count of a target.
#[derive(Debug, Clone, Default)]
pub struct Tracker {
    target: Option<Target>,
    best: Option<BestFound>,
    playouts_to_target: Option<u64>,
}

impl Tracker {
    pub fn new(target: Option<Target>) -> Self {
        Self {
            target,
            best: None,
            playouts_to_target: None,
        }
    }

    /// Records a completed playout; `completed` counts it. Returns true once
    /// the target has been reached.
    pub fn record(&mut self, outcome: &Outcome, moves: &[Move], ordinal: u64, completed: u64) -> bool {
        let better = match &self.best {
            None => true,
            Some(b) => outcome.reward > b.reward || (outcome.reward == b.reward && ordinal < b.ordinal),
        };
        if better {
            self.best = Some(BestFound {
                reward: outcome.reward,
                cost: outcome.cost,
                moves: moves.to_vec(),
                ordinal,
            });
        }
        if self.playouts_to_target.is_none() && self.target.is_some_and(|t| t.is_hit(outcome)) {
            self.playouts_to_target = Some(completed);
        }
        self.playouts_to_target.is_some()
    }

    pub fn best(&self) -> Option<&BestFound> {
        self.best.as_ref()
    }

    pub fn playouts_to_target(&self) -> Option<u64> {
        self.playouts_to_target
    }
}

#[derive(Debug)]
pub struct SearchResult {
    pub tree: SearchTree,
    /// Root child with the most visits.
    pub best_move: Option<Move>,
    /// Completed playouts.
    pub playouts: u64,
    pub best: Option<BestFound>,
    /// Completed playouts when the target was first reached.
    pub playouts_to_target: Option<u64>,
    pub pipeline_stats: Option<PipelineStats>,
}

impl SearchResult {
    pub fn new(tree: SearchTree, playouts: u64, tracker: Tracker) -> Self {
        let best_move = tree.best_child().and_then(Node::mv);
        Self {
            tree,
            best_move,
            playouts,
            best: tracker.best,
            playouts_to_target: tracker.playouts_to_target,
            pipeline_stats: None,
        }
    }
}

/// Sequential UCT search with a single token.
pub fn uct_search<S: SearchState>(root_state: &S, config: &SearchConfig) -> Result<SearchResult, SearchError> {
    if root_state.is_terminal() {
        return Err(SearchError::TerminalRoot);
    }
    let tree = SearchTree::new();
    let mut tracker = Tracker::new(config.target);
    let mut completed = 0;
    {
        let mut token = Token::new(0, tree.root(), root_state, config.seed, 0);
        for ordinal in 0..config.budget.max_playouts() {
            token.reissue(tree.root(), root_state, config.seed, ordinal);
            iterate(&mut token, config.cp)?;
            completed += 1;
            let outcome = token.outcome.expect("evaluated");
            if tracker.record(&outcome, token.state.history(), ordinal, completed) {
                break;
            }
        }
    }
    Ok(SearchResult::new(tree, completed, tracker))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::poly::parse_polynomial;
    use crate::problem::{HornerProblem, HornerState, SyntheticProblem, SyntheticState};

    fn synthetic(b: usize, d: usize, seed: u64) -> SyntheticState {
        SyntheticState::new(Arc::new(SyntheticProblem::new(b, d, seed)))
    }

    fn config(budget: u64, cp: f64, seed: u64) -> SearchConfig {
        SearchConfig::new(budget, cp, seed).unwrap()
    }

    #[test]
    fn select_on_fresh_root_stays_at_root() {
        let tree = SearchTree::new();
        let root_state = synthetic(3, 2, 1);
        let mut token = Token::new(0, tree.root(), &root_state, 7, 0);
        select(&mut token, 1.0);
        assert!(std::ptr::eq(token.node, tree.root()));
        assert!(token.state.history().is_empty());
    }

    #[test]
    fn select_follows_highest_mean_with_zero_cp() {
        let tree = SearchTree::new();
        let root = tree.root();
        root.init(&[0, 1, 2]);
        for _ in 0..3 {
            root.add_child();
        }
        for (child, mean) in root.children().iter().zip([0.2, 0.9, 0.5]) {
            child.update(mean);
            root.update(mean);
        }
        let root_state = synthetic(3, 2, 1);
        let mut token = Token::new(0, root, &root_state, 7, 0);
        select(&mut token, 0.0);
        assert_eq!(token.node.mv(), Some(1));
        assert_eq!(token.state.history(), &[1]);
    }

    #[test]
    fn select_descends_two_levels() {
        let tree = SearchTree::new();
        let root = tree.root();
        root.init(&[0, 1]);
        root.add_child();
        root.add_child();
        let child = &root.children()[0];
        child.init(&[0, 1]);
        child.add_child();
        child.add_child();
        child.children()[1].update(1.0);
        child.children()[0].update(0.1);
        child.update(0.0);
        root.children()[1].update(0.0);
        let root_state = synthetic(2, 3, 1);
        let mut token = Token::new(0, root, &root_state, 7, 0);
        select(&mut token, 0.0);
        assert_eq!(token.state.history(), &[0, 1]);
        assert_eq!(token.node.depth(), 2);
    }

    #[test]
    fn uct_ties_go_to_lowest_index() {
        let tree = SearchTree::new();
        let root = tree.root();
        root.init(&[5, 3, 4]);
        assert_eq!(best_uct_child(root, 1.0).unwrap().mv(), Some(5));
    }

    #[test]
    fn expand_terminal_is_a_no_op() {
        let tree = SearchTree::new();
        let mut state = synthetic(2, 1, 1);
        state.set_move(0).unwrap();
        let mut token = Token::new(0, tree.root(), &state, 7, 0);
        expand(&mut token);
        assert!(std::ptr::eq(token.node, tree.root()));
        assert!(!tree.root().is_parent());
    }

    #[test]
    fn expand_fresh_node_moves_to_a_child() {
        let tree = SearchTree::new();
        let state = synthetic(3, 2, 1);
        let mut token = Token::new(0, tree.root(), &state, 7, 0);
        expand(&mut token);
        let mv = token.node.mv().unwrap();
        assert!(state.untried_moves().contains(&mv));
        assert_eq!(token.state.history(), &[mv]);
        let mut labels: Vec<_> = tree.root().children().iter().filter_map(Node::mv).collect();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2]);
    }

    #[test]
    fn expand_on_exhausted_node_stays_put() {
        let tree = SearchTree::new();
        let root = tree.root();
        root.init(&[0, 1]);
        root.add_child();
        root.add_child();
        root.add_child();
        let state = synthetic(2, 2, 1);
        let mut token = Token::new(0, root, &state, 7, 0);
        expand(&mut token);
        assert!(std::ptr::eq(token.node, root));
        assert!(token.state.history().is_empty());
    }

    #[test]
    fn random_simulation_completes_a_permutation() {
        let p = Arc::new(HornerProblem::new(parse_polynomial("a*b*c*d + a*c + b*d").unwrap()).unwrap());
        let mut state = HornerState::new(p);
        state.set_move(2).unwrap();
        state.set_move(0).unwrap();
        let tree = SearchTree::new();
        let mut token = Token::new(0, tree.root(), &state, 3, 5);
        random_simulation(&mut token);
        let mut order = token.state.history().to_vec();
        assert_eq!(&order[..2], &[2, 0]);
        order.sort_unstable();
        assert_eq!(order, vec![0, 1, 2, 3]);
        assert!(tree.root().children().is_empty());

        let mut again = Token::new(0, tree.root(), &state, 3, 5);
        random_simulation(&mut again);
        assert_eq!(again.state.history(), token.state.history());
    }

    #[test]
    fn evaluation_matches_table_and_is_pure() {
        let problem = SyntheticProblem::new(2, 2, 4);
        let mut state = SyntheticState::new(Arc::new(problem.clone()));
        state.set_move(1).unwrap();
        state.set_move(0).unwrap();
        let tree = SearchTree::new();
        let mut token = Token::new(0, tree.root(), &state, 3, 0);
        evaluation(&mut token).unwrap();
        let first = token.delta().unwrap();
        assert_eq!(first, problem.payoff(&[1, 0]));
        evaluation(&mut token).unwrap();
        assert_eq!(token.delta(), Some(first));

        let mut partial = Token::new(0, tree.root(), &synthetic(2, 2, 4), 3, 0);
        assert_eq!(evaluation(&mut partial), Err(ProblemError::NotTerminal));
    }

    #[test]
    fn backup_updates_every_node_on_the_path() {
        let tree = SearchTree::new();
        let root = tree.root();
        root.init(&[0]);
        let a = root.add_child();
        a.init(&[0]);
        let b = a.add_child();
        b.init(&[0]);
        let c = b.add_child();
        let state = synthetic(1, 3, 0);
        let mut token = Token::new(0, c, &state, 0, 0);
        token.outcome = Some(Outcome { reward: 0.5, cost: None });
        backup(&mut token);
        for node in [root, a, b, c] {
            assert_eq!(node.visits(), 1);
        }

        let tree = SearchTree::new();
        let mut token = Token::new(0, tree.root(), &state, 0, 0);
        token.outcome = Some(Outcome { reward: 0.5, cost: None });
        backup(&mut token);
        assert_eq!(tree.root().visits(), 1);
    }

    #[test]
    fn single_playout_expands_one_child() {
        let result = uct_search(&synthetic(3, 3, 2), &config(1, 1.0, 9)).unwrap();
        let root = result.tree.root();
        assert_eq!(root.visits(), 1);
        assert_eq!(root.children().iter().filter(|c| c.visits() > 0).count(), 1);
        assert_eq!(result.playouts, 1);
    }

    #[test]
    fn root_visits_equal_budget() {
        let result = uct_search(&synthetic(3, 4, 2), &config(500, 0.7, 9)).unwrap();
        assert_eq!(result.tree.root().visits(), 500);
        assert_eq!(result.playouts, 500);
    }

    #[test]
    fn finds_the_optimum_of_a_small_tree() {
        let problem = Arc::new(SyntheticProblem::new(2, 2, 11));
        let (best_path, _) = problem.optimum().unwrap();
        let result = uct_search(&SyntheticState::new(problem), &config(400, 0.5, 3)).unwrap();
        assert_eq!(result.best_move, Some(best_path[0]));
        assert_eq!(result.best.unwrap().moves, best_path);
    }

    #[test]
    fn same_seed_same_tree() {
        let a = uct_search(&synthetic(3, 4, 2), &config(300, 0.5, 17)).unwrap();
        let b = uct_search(&synthetic(3, 4, 2), &config(300, 0.5, 17)).unwrap();
        assert_eq!(a.tree.dump(), b.tree.dump());
        let c = uct_search(&synthetic(3, 4, 2), &config(300, 0.5, 18)).unwrap();
        assert_ne!(a.tree.dump(), c.tree.dump());
    }

    #[test]
    fn terminal_root_is_rejected() {
        let mut s = synthetic(2, 1, 0);
        s.set_move(1).unwrap();
        assert_eq!(uct_search(&s, &config(10, 1.0, 0)).unwrap_err(), SearchError::TerminalRoot);
    }

    #[test]
    fn first_hit_mode_stops_at_target() {
        let problem = Arc::new(SyntheticProblem::new(2, 3, 5));
        let (_, best) = problem.optimum().unwrap();
        let cfg = config(10_000, 0.5, 1).with_target(Target::Reward(best));
        let result = uct_search(&SyntheticState::new(problem), &cfg).unwrap();
        let hit = result.playouts_to_target.unwrap();
        assert_eq!(result.playouts, hit);
        assert_eq!(result.tree.root().visits(), hit);
        assert_eq!(result.best.unwrap().reward, best);
    }

    #[test]
    fn invalid_configs() {
        assert!(SearchBudget::new(0).is_err());
        assert!(SearchConfig::new(10, -1.0, 0).is_err());
        assert!(SearchConfig::new(10, f64::NAN, 0).is_err());
    }

    #[test]
    fn targets() {
        let o = Outcome { reward: 0.5, cost: Some(12) };
        assert!(Target::Reward(0.5).is_hit(&o));
        assert!(!Target::Reward(0.6).is_hit(&o));
        assert!(Target::Cost(12).is_hit(&o));
        assert!(!Target::Cost(11).is_hit(&o));
        assert!(!Target::Cost(100).is_hit(&Outcome { reward: 1.0, cost: None }));
    }
}
