//! Benchmark harness: runs a matrix of scheduler configurations, records one
//! [`RunRecord`] per run, and reduces records to playout speedup and search
//! overhead tables.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mcts::{SearchConfig, SearchError, SearchResult, Target};
use crate::problem::{Problem, ProblemError, ProblemSpec};
use crate::sched::{run_pipeline, run_sequential, run_tree_parallel, PipelineConfig};
use crate::seed;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("no sequential baseline for budget {budget}")]
    MissingBaseline { budget: u64 },
    #[error("every run of {0} missed the target")]
    AllCensored(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BenchError {
    /// True for failures reading or writing files, as opposed to bad input.
    pub fn is_io(&self) -> bool {
        match self {
            BenchError::Io(_) => true,
            BenchError::Problem(ProblemError::Io { .. }) => true,
            BenchError::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(_)),
            BenchError::Json(e) => e.is_io(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Seq,
    Treepar,
    Pipeline,
}

impl SchedulerKind {
    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Seq => "seq",
            SchedulerKind::Treepar => "treepar",
            SchedulerKind::Pipeline => "pipeline",
        }
    }

    pub fn run(self, problem: &Problem, config: &PipelineConfig) -> Result<SearchResult, SearchError> {
        let root = problem.root_state();
        match self {
            SchedulerKind::Seq => run_sequential(&root, config),
            SchedulerKind::Treepar => run_tree_parallel(&root, config),
            SchedulerKind::Pipeline => run_pipeline(&root, config),
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seq" => Ok(SchedulerKind::Seq),
            "treepar" => Ok(SchedulerKind::Treepar),
            "pipeline" => Ok(SchedulerKind::Pipeline),
            other => Err(BenchError::InvalidConfig(format!(
                "unknown scheduler `{other}` (expected seq, treepar or pipeline)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(BenchError::InvalidConfig(format!("unknown format `{other}` (expected csv or json)"))),
        }
    }
}

/// One timed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scheduler: SchedulerKind,
    pub worker_threads: usize,
    pub token_limit: usize,
    pub budget: u64,
    /// Seconds, monotonic clock, around the scheduler call only.
    pub wall_time: f64,
    pub best_move: Option<usize>,
    /// Operation count of the best scheme found (Horner problems only).
    pub best_ops: Option<u64>,
    pub seed: u64,
    pub repeat_index: usize,
    /// Completed playouts; equals `budget` unless the run stopped at a target.
    pub playouts: u64,
    pub playouts_to_target: Option<u64>,
}

impl RunRecord {
    fn cell(&self) -> Cell {
        Cell {
            scheduler: self.scheduler,
            worker_threads: self.worker_threads,
            token_limit: self.token_limit,
            budget: self.budget,
        }
    }
}

/// A configuration point of the matrix, without repeat or seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Cell {
    pub scheduler: SchedulerKind,
    pub worker_threads: usize,
    pub token_limit: usize,
    pub budget: u64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub problem: ProblemSpec,
    pub schedulers: Vec<SchedulerKind>,
    pub tokens: Vec<usize>,
    pub threads: Vec<usize>,
    pub budget: u64,
    pub cp: f64,
    pub repeats: usize,
    pub seed: u64,
    pub linear: bool,
    /// First-hit mode: the budget becomes a cap.
    pub target: Option<Target>,
    /// Derive a distinct seed per repeat instead of reusing `seed`.
    pub vary_seeds: bool,
}

impl BenchmarkConfig {
    pub fn new(problem: ProblemSpec) -> Self {
        Self {
            problem,
            schedulers: vec![SchedulerKind::Seq, SchedulerKind::Pipeline],
            tokens: vec![1],
            threads: vec![1],
            budget: 1024,
            cp: 0.1,
            repeats: 10,
            seed: 0,
            linear: false,
            target: None,
            vary_seeds: false,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.repeats == 0 {
            return Err(BenchError::InvalidConfig("repeats must be at least 1".into()));
        }
        if self.schedulers.is_empty() {
            return Err(BenchError::InvalidConfig("no scheduler selected".into()));
        }
        let needs_threads = self.schedulers.iter().any(|&s| s != SchedulerKind::Seq);
        if needs_threads && (self.threads.is_empty() || self.threads.contains(&0)) {
            return Err(BenchError::InvalidConfig("thread counts must be positive".into()));
        }
        if self.schedulers.contains(&SchedulerKind::Pipeline) && (self.tokens.is_empty() || self.tokens.contains(&0)) {
            return Err(BenchError::InvalidConfig("token limits must be positive".into()));
        }
        self.search_config(self.seed).map(|_| ()).map_err(BenchError::from)
    }

    fn search_config(&self, seed: u64) -> Result<SearchConfig, SearchError> {
        let mut search = SearchConfig::new(self.budget, self.cp, seed)?;
        search.target = self.target;
        Ok(search)
    }

    /// Every cell in run order: schedulers as listed, then threads, then tokens.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &scheduler in &self.schedulers {
            let cell = |worker_threads, token_limit| Cell {
                scheduler,
                worker_threads,
                token_limit,
                budget: self.budget,
            };
            match scheduler {
                SchedulerKind::Seq => cells.push(cell(1, 1)),
                SchedulerKind::Treepar => cells.extend(self.threads.iter().map(|&t| cell(t, t))),
                SchedulerKind::Pipeline => {
                    for &t in &self.threads {
                        cells.extend(self.tokens.iter().map(|&k| cell(t, k)));
                    }
                }
            }
        }
        cells
    }

    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        if self.vary_seeds {
            seed::derive(&[self.seed, repeat as u64])
        } else {
            self.seed
        }
    }
}

/// Runs one cell once and measures it.
pub fn run_cell(
    problem: &Problem,
    config: &BenchmarkConfig,
    cell: Cell,
    seed: u64,
    repeat_index: usize,
) -> Result<RunRecord, BenchError> {
    let pipeline = PipelineConfig::new(config.search_config(seed)?)
        .with_threads(cell.worker_threads)
        .with_tokens(cell.token_limit)
        .with_linear(config.linear);
    let start = Instant::now();
    let result = cell.scheduler.run(problem, &pipeline)?;
    let wall_time = start.elapsed().as_secs_f64();
    Ok(RunRecord {
        scheduler: cell.scheduler,
        worker_threads: cell.worker_threads,
        token_limit: cell.token_limit,
        budget: cell.budget,
        wall_time,
        best_move: result.best_move,
        best_ops: result.best.as_ref().and_then(|b| b.cost),
        seed,
        repeat_index,
        playouts: result.playouts,
        playouts_to_target: result.playouts_to_target,
    })
}

/// Runs every cell `repeats` times, one cell at a time, each after one
/// untimed warm-up run.
pub fn run_matrix(config: &BenchmarkConfig) -> Result<Vec<RunRecord>, BenchError> {
    run_matrix_with(config, |_| {})
}

/// As [`run_matrix`], calling `progress` after every record.
pub fn run_matrix_with(
    config: &BenchmarkConfig,
    mut progress: impl FnMut(&RunRecord),
) -> Result<Vec<RunRecord>, BenchError> {
    config.validate()?;
    let problem = config.problem.load()?;
    let mut records = Vec::new();
    for cell in config.cells() {
        run_cell(&problem, config, cell, config.repeat_seed(0), 0)?;
        for repeat in 0..config.repeats {
            let record = run_cell(&problem, config, cell, config.repeat_seed(repeat), repeat)?;
            progress(&record);
            records.push(record);
        }
    }
    Ok(records)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn sample_stddev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Speedup {
    /// Mean sequential time over mean parallel time.
    pub speedup: f64,
    /// Sample standard deviation of per-repeat ratios against the
    /// sequential mean.
    pub stddev: f64,
}

/// Playout speedup from raw wall times.
pub fn speedup(sequential: &[f64], parallel: &[f64]) -> Speedup {
    let base = mean(sequential);
    let ratios: Vec<f64> = parallel.iter().map(|t| base / t).collect();
    Speedup {
        speedup: base / mean(parallel),
        stddev: sample_stddev(&ratios),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupRow {
    pub cell: Cell,
    pub speedup: Speedup,
    pub repeats: usize,
}

/// Speedup of every cell against the sequential records of the same budget.
pub fn playout_speedup(records: &[RunRecord]) -> Result<Vec<SpeedupRow>, BenchError> {
    let groups = group(records);
    let mut rows = Vec::new();
    for (cell, runs) in &groups {
        let baseline = baseline(&groups, cell.budget)?;
        let seq: Vec<f64> = baseline.iter().map(|r| r.wall_time).collect();
        let par: Vec<f64> = runs.iter().map(|r| r.wall_time).collect();
        rows.push(SpeedupRow {
            cell: *cell,
            speedup: speedup(&seq, &par),
            repeats: runs.len(),
        });
    }
    Ok(rows)
}

/// `mean(parallel) / mean(sequential) - 1` over playouts-to-target.
pub fn overhead(sequential: &[u64], parallel: &[u64]) -> f64 {
    let m = |v: &[u64]| v.iter().sum::<u64>() as f64 / v.len() as f64;
    m(parallel) / m(sequential) - 1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverheadRow {
    pub cell: Cell,
    pub overhead: f64,
    /// Parallel runs that never reached the target.
    pub censored: usize,
    pub runs: usize,
}

/// Search overhead of every cell against the sequential records of the same
/// budget. Runs that missed the target are excluded and counted as censored.
pub fn search_overhead(records: &[RunRecord]) -> Result<Vec<OverheadRow>, BenchError> {
    let groups = group(records);
    let hits = |runs: &[&RunRecord]| -> Vec<u64> { runs.iter().filter_map(|r| r.playouts_to_target).collect() };
    let mut rows = Vec::new();
    for (cell, runs) in &groups {
        let seq = hits(baseline(&groups, cell.budget)?);
        if seq.is_empty() {
            return Err(BenchError::AllCensored(format!("seq at budget {}", cell.budget)));
        }
        let par = hits(runs);
        if par.is_empty() {
            return Err(BenchError::AllCensored(describe(cell)));
        }
        rows.push(OverheadRow {
            cell: *cell,
            overhead: overhead(&seq, &par),
            censored: runs.len() - par.len(),
            runs: runs.len(),
        });
    }
    Ok(rows)
}

pub fn describe(cell: &Cell) -> String {
    format!(
        "{} threads={} tokens={} budget={}",
        cell.scheduler, cell.worker_threads, cell.token_limit, cell.budget
    )
}

fn group(records: &[RunRecord]) -> BTreeMap<Cell, Vec<&RunRecord>> {
    let mut groups: BTreeMap<Cell, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.cell()).or_default().push(r);
    }
    groups
}

fn baseline<'a>(groups: &'a BTreeMap<Cell, Vec<&'a RunRecord>>, budget: u64) -> Result<&'a [&'a RunRecord], BenchError> {
    groups
        .iter()
        .find(|(c, _)| c.scheduler == SchedulerKind::Seq && c.budget == budget)
        .map(|(_, runs)| runs.as_slice())
        .ok_or(BenchError::MissingBaseline { budget })
}

pub fn write_records(records: &[RunRecord], format: OutputFormat, out: impl Write) -> Result<(), BenchError> {
    match format {
        OutputFormat::Csv => {
            let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
            writer.write_record(CSV_HEADER)?;
            for r in records {
                writer.serialize(r)?;
            }
            writer.flush()?;
        }
        OutputFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, records)?;
            out.write_all(b"\n")?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Column names, written explicitly so an empty record list still gets a header.
pub const CSV_HEADER: [&str; 11] = [
    "scheduler",
    "worker_threads",
    "token_limit",
    "budget",
    "wall_time",
    "best_move",
    "best_ops",
    "seed",
    "repeat_index",
    "playouts",
    "playouts_to_target",
];

pub fn read_records(format: OutputFormat, input: impl Read) -> Result<Vec<RunRecord>, BenchError> {
    match format {
        OutputFormat::Csv => csv::Reader::from_reader(input)
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(BenchError::from),
        OutputFormat::Json => Ok(serde_json::from_reader(input)?),
    }
}

pub fn emit(records: &[RunRecord], format: OutputFormat, path: &Path) -> Result<(), BenchError> {
    let file = File::create(path)?;
    write_records(records, format, BufWriter::new(file))
}

pub fn load(format: OutputFormat, path: &Path) -> Result<Vec<RunRecord>, BenchError> {
    read_records(format, io::BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(scheduler: SchedulerKind, threads: usize, tokens: usize, wall_time: f64, hit: Option<u64>) -> RunRecord {
        RunRecord {
            scheduler,
            worker_threads: threads,
            token_limit: tokens,
            budget: 100,
            wall_time,
            best_move: Some(1),
            best_ops: None,
            seed: 3,
            repeat_index: 0,
            playouts: hit.unwrap_or(100),
            playouts_to_target: hit,
        }
    }

    fn synthetic_config() -> BenchmarkConfig {
        let mut c = BenchmarkConfig::new(ProblemSpec::parse("synthetic:b=2,d=3,seed=1").unwrap());
        c.budget = 50;
        c.repeats = 3;
        c
    }

    #[test]
    fn speedup_arithmetic() {
        assert_eq!(speedup(&[2.0, 2.0], &[2.0, 2.0]).speedup, 1.0);
        let s = speedup(&[10.0], &[0.5]);
        assert_eq!(s.speedup, 20.0);
        assert_eq!(s.stddev, 0.0);
    }

    #[test]
    fn stddev_matches_hand_computation() {
        // mean 5, squared deviations 9+1+1+9 = 20, /3
        assert!((sample_stddev(&[2.0, 4.0, 6.0, 8.0]) - (20.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn overhead_arithmetic() {
        assert_eq!(overhead(&[40, 60], &[50, 50]), 0.0);
        assert_eq!(overhead(&[50], &[100]), 1.0);
    }

    #[test]
    fn speedup_table_needs_a_baseline() {
        let records = vec![record(SchedulerKind::Pipeline, 2, 4, 1.0, None)];
        assert!(matches!(playout_speedup(&records), Err(BenchError::MissingBaseline { budget: 100 })));

        let records = vec![
            record(SchedulerKind::Seq, 1, 1, 4.0, None),
            record(SchedulerKind::Pipeline, 2, 4, 1.0, None),
        ];
        let rows = playout_speedup(&records).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].speedup.speedup, 1.0);
        assert_eq!(rows[1].speedup.speedup, 4.0);
    }

    #[test]
    fn overhead_table_censors_misses() {
        let records = vec![
            record(SchedulerKind::Seq, 1, 1, 1.0, Some(10)),
            record(SchedulerKind::Treepar, 8, 8, 1.0, Some(30)),
            record(SchedulerKind::Treepar, 8, 8, 1.0, None),
        ];
        let rows = search_overhead(&records).unwrap();
        let row = &rows[1];
        assert_eq!(row.overhead, 2.0);
        assert_eq!(row.censored, 1);

        let all_missed = vec![
            record(SchedulerKind::Seq, 1, 1, 1.0, Some(10)),
            record(SchedulerKind::Treepar, 8, 8, 1.0, None),
        ];
        assert!(matches!(search_overhead(&all_missed), Err(BenchError::AllCensored(_))));
    }

    #[test]
    fn empty_outputs() {
        let mut csv_out = Vec::new();
        write_records(&[], OutputFormat::Csv, &mut csv_out).unwrap();
        assert_eq!(String::from_utf8(csv_out).unwrap(), CSV_HEADER.join(",") + "\n");
        let mut json_out = Vec::new();
        write_records(&[], OutputFormat::Json, &mut json_out).unwrap();
        assert_eq!(String::from_utf8(json_out).unwrap().trim(), "[]");
    }

    #[test]
    fn csv_header_matches_serialized_fields() {
        let r = record(SchedulerKind::Treepar, 2, 2, 0.25, Some(7));
        let value = serde_json::to_value(&r).unwrap();
        let keys: Vec<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
        let mut expected = CSV_HEADER.to_vec();
        let mut keys_sorted = keys.clone();
        expected.sort_unstable();
        keys_sorted.sort_unstable();
        assert_eq!(keys_sorted, expected);

        let mut out = Vec::new();
        write_records(std::slice::from_ref(&r), OutputFormat::Csv, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(read_records(OutputFormat::Csv, text.as_bytes()).unwrap(), vec![r]);
    }

    #[test]
    fn cells_follow_scheduler_rules() {
        let mut c = synthetic_config();
        c.schedulers = vec![SchedulerKind::Seq, SchedulerKind::Treepar, SchedulerKind::Pipeline];
        c.threads = vec![1, 2];
        c.tokens = vec![1, 4, 8];
        let cells = c.cells();
        assert_eq!(cells.len(), 1 + 2 + 6);
        assert!(cells
            .iter()
            .filter(|c| c.scheduler == SchedulerKind::Treepar)
            .all(|c| c.token_limit == c.worker_threads));
    }

    #[test]
    fn repeats_produce_one_record_each() {
        let mut c = synthetic_config();
        c.schedulers = vec![SchedulerKind::Seq];
        let records = run_matrix(&c).unwrap();
        assert_eq!(records.len(), 3);
        assert!(records.iter().all(|r| r.wall_time > 0.0 && r.playouts == 50));
        assert_eq!(records.iter().map(|r| r.repeat_index).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(records.windows(2).all(|w| w[0].best_move == w[1].best_move));
    }

    #[test]
    fn vary_seeds_changes_seeds() {
        let mut c = synthetic_config();
        c.vary_seeds = true;
        assert_ne!(c.repeat_seed(0), c.repeat_seed(1));
        c.vary_seeds = false;
        assert_eq!(c.repeat_seed(0), c.repeat_seed(1));
    }

    #[test]
    fn bad_configs_and_missing_files() {
        let mut c = synthetic_config();
        c.repeats = 0;
        assert!(matches!(run_matrix(&c), Err(BenchError::InvalidConfig(_))));
        assert!("fastest".parse::<SchedulerKind>().is_err());
        assert!("xml".parse::<OutputFormat>().is_err());

        let c = BenchmarkConfig::new(ProblemSpec::parse("horner:/nonexistent/p.txt").unwrap());
        let err = run_matrix(&c).unwrap_err();
        assert!(err.is_io());
    }
}
