//! Execution backends over the MCTS stage functions.
//!
//! * [`run_sequential`]: one token, one thread.
//! * [`run_tree_parallel`]: worker threads each run whole iterations against
//!   the shared tree.
//! * [`run_pipeline`]: a five-stage pipeline. Select and Backup are
//!   serial-in-order stages; Expand, RandomSimulation and Evaluation run
//!   concurrently. At most `token_limit` tokens are in flight.
//!
//! Pipeline workers are bound to items: a worker carries a token through
//! consecutive stages and, when the next stage is serial and it is not that
//! token's turn yet, parks it at the stage's gate for whichever worker frees
//! the gate later.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::Duration;

use crate::mcts::{
    self, uct_search, SearchConfig, SearchError, SearchResult, Token, Tracker,
};
use crate::problem::{ProblemError, SearchState};
use crate::tree::SearchTree;

pub fn available_cores() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub search: SearchConfig,
    pub token_limit: usize,
    pub worker_threads: usize,
    /// Makes every stage serial-in-order.
    pub linear: bool,
    pub drain_timeout: Duration,
}

impl PipelineConfig {
    /// Defaults: one worker per core, two tokens per core.
    pub fn new(search: SearchConfig) -> Self {
        let cores = available_cores();
        Self {
            search,
            token_limit: 2 * cores,
            worker_threads: cores,
            linear: false,
            drain_timeout: Duration::from_secs(600),
        }
    }

    pub fn with_tokens(mut self, token_limit: usize) -> Self {
        self.token_limit = token_limit;
        self
    }

    pub fn with_threads(mut self, worker_threads: usize) -> Self {
        self.worker_threads = worker_threads;
        self
    }

    pub fn with_linear(mut self, linear: bool) -> Self {
        self.linear = linear;
        self
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.token_limit == 0 {
            return Err(SearchError::InvalidConfig("token limit must be at least 1".into()));
        }
        if self.worker_threads == 0 {
            return Err(SearchError::InvalidConfig("worker thread count must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn run_sequential<S: SearchState>(root_state: &S, config: &PipelineConfig) -> Result<SearchResult, SearchError> {
    uct_search(root_state, &config.search)
}

pub fn run_tree_parallel<S: SearchState>(
    root_state: &S,
    config: &PipelineConfig,
) -> Result<SearchResult, SearchError> {
    config.validate()?;
    if root_state.is_terminal() {
        return Err(SearchError::TerminalRoot);
    }
    let search = config.search;
    let budget = search.budget.max_playouts();
    let tree = SearchTree::new();
    let issued = AtomicU64::new(0);
    let completed = AtomicU64::new(0);
    let stop = AtomicBool::new(false);
    let tracker = Mutex::new(Tracker::new(search.target));
    let failure: Mutex<Option<ProblemError>> = Mutex::new(None);

    thread::scope(|scope| {
        for id in 0..config.worker_threads {
            let (tree, issued, completed, stop, tracker, failure) =
                (&tree, &issued, &completed, &stop, &tracker, &failure);
            scope.spawn(move || {
                let mut token = Token::new(id, tree.root(), root_state, search.seed, 0);
                while !stop.load(Ordering::SeqCst) {
                    let ordinal = issued.fetch_add(1, Ordering::SeqCst);
                    if ordinal >= budget {
                        break;
                    }
                    token.reissue(tree.root(), root_state, search.seed, ordinal);
                    if let Err(e) = mcts::iterate(&mut token, search.cp) {
                        failure.lock().unwrap().get_or_insert(e);
                        stop.store(true, Ordering::SeqCst);
                        break;
                    }
                    let done = completed.fetch_add(1, Ordering::SeqCst) + 1;
                    let outcome = token.outcome.expect("evaluated");
                    let hit = tracker
                        .lock()
                        .unwrap()
                        .record(&outcome, token.state.history(), ordinal, done);
                    if hit {
                        stop.store(true, Ordering::SeqCst);
                    }
                }
            });
        }
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e.into());
    }
    let completed = completed.into_inner();
    Ok(SearchResult::new(tree, completed, tracker.into_inner().unwrap()))
}

pub fn run_pipeline<S: SearchState>(root_state: &S, config: &PipelineConfig) -> Result<SearchResult, SearchError> {
    config.validate()?;
    if root_state.is_terminal() {
        return Err(SearchError::TerminalRoot);
    }
    let tree = SearchTree::new();
    let parts = {
        let pipeline = Pipeline::new(&tree, root_state, *config)?;
        let drained = thread::scope(|scope| {
            for _ in 0..config.worker_threads {
                scope.spawn(|| pipeline.run_worker());
            }
            let drained = pipeline.drain(config.drain_timeout);
            if let Err(e) = &drained {
                eprintln!("pipesearch: {e}");
            }
            drained
        });
        drained?;
        pipeline.into_parts()?
    };
    let (completed, tracker, stats) = parts;
    let mut result = SearchResult::new(tree, completed, tracker);
    result.pipeline_stats = Some(stats);
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Select,
    Expand,
    RandomSimulation,
    Evaluation,
    Backup,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Select,
        Stage::Expand,
        Stage::RandomSimulation,
        Stage::Evaluation,
        Stage::Backup,
    ];
}

const STAGES: usize = Stage::ALL.len();
const BACKUP: usize = STAGES - 1;

/// Counters collected while the pipeline runs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineStats {
    /// Most tokens simultaneously between Select entry and Backup exit.
    pub max_in_flight: usize,
    /// Most tokens simultaneously inside each stage.
    pub max_concurrent: [usize; STAGES],
    /// Times a token entered a serial stage that was already occupied.
    pub serial_overlaps: u64,
    /// Backups that ran out of issue order.
    pub order_violations: u64,
    /// Backups completed after the stop signal.
    pub backups_after_stop: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrainReport {
    pub issued: u64,
    pub completed: u64,
    pub backups_after_stop: u64,
}

struct Gate<'t, S> {
    next: u64,
    busy: bool,
    parked: BTreeMap<u64, Token<'t, S>>,
}

struct Shared<'t, S> {
    pool: Vec<Option<Token<'t, S>>>,
    issued: u64,
    /// Tokens that left Backup.
    retired: u64,
    /// Retired tokens that produced a playout.
    completed: u64,
    stopped: bool,
    aborted: bool,
    gates: Vec<Gate<'t, S>>,
    tracker: Tracker,
    failure: Option<ProblemError>,
    stats: PipelineStats,
}

impl<S> Shared<'_, S> {
    fn in_flight(&self) -> u64 {
        self.issued - self.retired
    }
}

/// A running pipeline over a borrowed tree. Call [`Pipeline::run_worker`]
/// from each worker thread and [`Pipeline::drain`] to wait for completion.
pub struct Pipeline<'t, S: SearchState> {
    tree: &'t SearchTree,
    root_state: &'t S,
    config: PipelineConfig,
    serial: [bool; STAGES],
    shared: Mutex<Shared<'t, S>>,
    wake: Condvar,
    occupancy: [AtomicUsize; STAGES],
    max_concurrent: [AtomicUsize; STAGES],
    overlaps: AtomicU64,
}

impl<'t, S: SearchState> Pipeline<'t, S> {
    pub fn new(tree: &'t SearchTree, root_state: &'t S, config: PipelineConfig) -> Result<Self, SearchError> {
        config.validate()?;
        let seed = config.search.seed;
        let pool = (0..config.token_limit)
            .map(|id| Some(Token::new(id, tree.root(), root_state, seed, id as u64)))
            .collect();
        let gates = (0..STAGES)
            .map(|_| Gate {
                next: 0,
                busy: false,
                parked: BTreeMap::new(),
            })
            .collect();
        let mut serial = [config.linear; STAGES];
        serial[0] = true;
        serial[BACKUP] = true;
        Ok(Self {
            tree,
            root_state,
            config,
            serial,
            shared: Mutex::new(Shared {
                pool,
                issued: 0,
                retired: 0,
                completed: 0,
                stopped: false,
                aborted: false,
                gates,
                tracker: Tracker::new(config.search.target),
                failure: None,
                stats: PipelineStats::default(),
            }),
            wake: Condvar::new(),
            occupancy: Default::default(),
            max_concurrent: Default::default(),
            overlaps: AtomicU64::new(0),
        })
    }

    fn lock(&self) -> MutexGuard<'_, Shared<'t, S>> {
        self.shared.lock().expect("pipeline state poisoned")
    }

    /// Stops Select from issuing further tokens. Tokens already in flight
    /// still run to completion.
    pub fn stop(&self) {
        self.lock().stopped = true;
        self.wake.notify_all();
    }

    fn issuing_done(&self, g: &Shared<'t, S>) -> bool {
        g.stopped || g.issued >= self.config.search.budget.max_playouts()
    }

    fn quiescent(&self, g: &Shared<'t, S>) -> bool {
        g.aborted || (self.issuing_done(g) && g.in_flight() == 0)
    }

    /// Waits until no token is in flight and none will be issued. A second
    /// call returns immediately. On timeout the workers are told to abandon
    /// their queues and an error is returned.
    pub fn drain(&self, timeout: Duration) -> Result<DrainReport, SearchError> {
        let g = self.lock();
        let (mut g, wait) = self
            .wake
            .wait_timeout_while(g, timeout, |g| !self.quiescent(g))
            .expect("pipeline state poisoned");
        if wait.timed_out() || (g.aborted && g.in_flight() > 0) {
            g.aborted = true;
            let err = SearchError::DrainTimeout {
                timeout_ms: timeout.as_millis(),
                issued: g.issued,
                completed: g.completed,
            };
            drop(g);
            self.wake.notify_all();
            return Err(err);
        }
        Ok(DrainReport {
            issued: g.issued,
            completed: g.completed,
            backups_after_stop: g.stats.backups_after_stop,
        })
    }

    pub fn stats(&self) -> PipelineStats {
        let mut stats = self.lock().stats.clone();
        for (slot, max) in stats.max_concurrent.iter_mut().zip(&self.max_concurrent) {
            *slot = max.load(Ordering::SeqCst);
        }
        stats.serial_overlaps = self.overlaps.load(Ordering::SeqCst);
        stats
    }

    /// Worker loop: runs until the pipeline is quiescent.
    pub fn run_worker(&self) {
        let mut g = self.lock();
        loop {
            if g.aborted {
                break;
            }
            if let Some((stage, token)) = Self::take_parked(&mut g) {
                drop(g);
                self.carry(token, stage);
                g = self.lock();
                continue;
            }
            if let Some(token) = self.try_issue(&mut g) {
                drop(g);
                self.carry(token, 0);
                g = self.lock();
                continue;
            }
            if self.quiescent(&g) {
                break;
            }
            g = self.wake.wait(g).expect("pipeline state poisoned");
        }
        drop(g);
        self.wake.notify_all();
    }

    /// A parked token whose turn has come, claiming its gate. Later stages
    /// first, so tokens drain before new work is issued.
    fn take_parked(g: &mut Shared<'t, S>) -> Option<(usize, Token<'t, S>)> {
        for stage in (1..STAGES).rev() {
            let gate = &mut g.gates[stage];
            if gate.busy {
                continue;
            }
            if let Some(token) = gate.parked.remove(&gate.next) {
                gate.busy = true;
                return Some((stage, token));
            }
        }
        None
    }

    fn try_issue(&self, g: &mut Shared<'t, S>) -> Option<Token<'t, S>> {
        if g.gates[0].busy || self.issuing_done(g) {
            return None;
        }
        let ordinal = g.issued;
        let slot = (ordinal % self.config.token_limit as u64) as usize;
        let mut token = g.pool[slot].take()?;
        g.issued += 1;
        g.gates[0].busy = true;
        let in_flight = g.in_flight() as usize;
        g.stats.max_in_flight = g.stats.max_in_flight.max(in_flight);
        token.reissue(self.tree.root(), self.root_state, self.config.search.seed, ordinal);
        Some(token)
    }

    /// Runs `token` from `stage` on. On entry the worker owns the stage's
    /// gate if the stage is serial.
    fn carry(&self, mut token: Token<'t, S>, mut stage: usize) {
        loop {
            self.run_stage(stage, &mut token);
            let next = stage + 1;
            let serial_next = next < STAGES && self.serial[next];
            if !self.serial[stage] && !serial_next && next < STAGES {
                stage = next;
                continue;
            }
            let mut g = self.lock();
            if self.serial[stage] {
                let gate = &mut g.gates[stage];
                gate.next += 1;
                gate.busy = false;
            }
            if stage == BACKUP {
                self.retire(&mut g, token);
                drop(g);
                self.wake.notify_all();
                return;
            }
            if serial_next {
                let gate = &mut g.gates[next];
                if gate.next == token.ordinal && !gate.busy {
                    gate.busy = true;
                } else {
                    gate.parked.insert(token.ordinal, token);
                    drop(g);
                    self.wake.notify_all();
                    return;
                }
            }
            let freed = self.serial[stage];
            drop(g);
            if freed {
                self.wake.notify_all();
            }
            stage = next;
        }
    }

    fn run_stage(&self, stage: usize, token: &mut Token<'t, S>) {
        let inside = self.occupancy[stage].fetch_add(1, Ordering::SeqCst) + 1;
        if self.serial[stage] && inside > 1 {
            self.overlaps.fetch_add(1, Ordering::SeqCst);
        }
        self.max_concurrent[stage].fetch_max(inside, Ordering::SeqCst);
        match Stage::ALL[stage] {
            Stage::Select => mcts::select(token, self.config.search.cp),
            Stage::Expand => mcts::expand(token),
            Stage::RandomSimulation => mcts::random_simulation(token),
            Stage::Evaluation => {
                if let Err(e) = mcts::evaluation(token) {
                    token.outcome = None;
                    let mut g = self.lock();
                    g.failure.get_or_insert(e);
                    g.stopped = true;
                }
            }
            Stage::Backup => mcts::backup(token),
        }
        self.occupancy[stage].fetch_sub(1, Ordering::SeqCst);
    }

    fn retire(&self, g: &mut Shared<'t, S>, token: Token<'t, S>) {
        if token.ordinal != g.retired {
            g.stats.order_violations += 1;
        }
        g.retired += 1;
        if g.stopped {
            g.stats.backups_after_stop += 1;
        }
        if let Some(outcome) = token.outcome {
            g.completed += 1;
            let completed = g.completed;
            if g.tracker.record(&outcome, token.state.history(), token.ordinal, completed) {
                g.stopped = true;
            }
        }
        let slot = token.id;
        g.pool[slot] = Some(token);
    }

    /// Completed playouts, best-result tracker and counters, or the first
    /// evaluation error.
    pub fn into_parts(self) -> Result<(u64, Tracker, PipelineStats), SearchError> {
        let stats = self.stats();
        let shared = self.shared.into_inner().expect("pipeline state poisoned");
        if let Some(e) = shared.failure {
            return Err(e.into());
        }
        Ok((shared.completed, shared.tracker, stats))
    }
}
