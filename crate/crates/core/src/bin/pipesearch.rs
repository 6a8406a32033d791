use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use pipesearch::bench::{
    self, describe, BenchError, BenchmarkConfig, OutputFormat, RunRecord, SchedulerKind,
};
use pipesearch::mcts::{SearchConfig, Target};
use pipesearch::problem::{Problem, ProblemSpec};
use pipesearch::sched::PipelineConfig;

#[derive(Parser)]
#[command(name = "pipesearch", version, about = "Parallel MCTS with a pipelined token scheduler")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark matrix and write one record per run.
    Bench(BenchArgs),
    /// Run a single search and print the result.
    Solve(SolveArgs),
}

#[derive(Args)]
struct Common {
    /// `horner:<path>` or `synthetic:b=<int>,d=<int>,seed=<int>[,work_us=<int>,work=spin|sleep]`.
    #[arg(long)]
    problem: String,
    /// Playout budget.
    #[arg(long, default_value_t = 1024)]
    playouts: u64,
    #[arg(long, default_value_t = 0.1)]
    cp: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Make every pipeline stage serial.
    #[arg(long)]
    linear_pipeline: bool,
    /// Stop at the first scheme with at most this many operations.
    #[arg(long)]
    target_ops: Option<u64>,
    /// Stop at the first playout reaching the optimum (synthetic problems).
    #[arg(long)]
    first_hit: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_value = "seq,pipeline")]
    scheduler: Vec<SchedulerKind>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    tokens: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    threads: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    /// Use a different derived seed for each repeat.
    #[arg(long)]
    vary_seeds: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "pipeline")]
    scheduler: SchedulerKind,
    /// Token limit; defaults to twice the core count.
    #[arg(long)]
    tokens: Option<usize>,
    /// Worker threads; defaults to the core count.
    #[arg(long)]
    threads: Option<usize>,
    /// Print the whole tree instead of the root's children.
    #[arg(long)]
    dump: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let outcome = match cli.command {
        Command::Bench(args) => bench_command(args),
        Command::Solve(args) => solve_command(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pipesearch: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}

fn load(common: &Common) -> Result<(ProblemSpec, Problem, Option<Target>), BenchError> {
    let spec = ProblemSpec::parse(&common.problem)?;
    let problem = spec.load()?;
    let target = match (&problem, common.target_ops, common.first_hit) {
        (_, Some(_), true) => {
            return Err(BenchError::InvalidConfig("use either --target-ops or --first-hit".into()))
        }
        (Problem::Horner(_), Some(ops), false) => Some(Target::Cost(ops)),
        (Problem::Synthetic(_), Some(_), false) => {
            return Err(BenchError::InvalidConfig("--target-ops applies to horner problems".into()))
        }
        (Problem::Synthetic(p), None, true) => Some(Target::Reward(p.optimum()?.1)),
        (Problem::Horner(_), None, true) => {
            return Err(BenchError::InvalidConfig("horner problems need --target-ops".into()))
        }
        (_, None, false) => None,
    };
    Ok((spec, problem, target))
}

fn bench_command(args: BenchArgs) -> Result<(), BenchError> {
    let (spec, _, target) = load(&args.common)?;
    let config = BenchmarkConfig {
        problem: spec,
        schedulers: args.scheduler,
        tokens: args.tokens,
        threads: args.threads,
        budget: args.common.playouts,
        cp: args.common.cp,
        repeats: args.repeats,
        seed: args.common.seed,
        linear: args.common.linear_pipeline,
        target,
        vary_seeds: args.vary_seeds,
    };
    let records = bench::run_matrix_with(&config, |r| {
        eprintln!(
            "{:<8} threads={:<3} tokens={:<4} repeat={:<3} {:.4}s",
            r.scheduler, r.worker_threads, r.token_limit, r.repeat_index, r.wall_time
        )
    })?;
    bench::emit(&records, args.format, &args.out)?;
    summarize(&records, target.is_some());
    Ok(())
}

fn summarize(records: &[RunRecord], first_hit: bool) {
    if let Ok(rows) = bench::playout_speedup(records) {
        println!("playout speedup");
        for row in rows {
            println!(
                "  {:<48} {:>7.3} (sd {:.3}, n={})",
                describe(&row.cell),
                row.speedup.speedup,
                row.speedup.stddev,
                row.repeats
            );
        }
    }
    if first_hit {
        match bench::search_overhead(records) {
            Ok(rows) => {
                println!("search overhead");
                for row in rows {
                    println!(
                        "  {:<48} {:>7.3} (censored {}/{})",
                        describe(&row.cell),
                        row.overhead,
                        row.censored,
                        row.runs
                    );
                }
            }
            Err(e) => println!("search overhead unavailable: {e}"),
        }
    }
}

fn solve_command(args: SolveArgs) -> Result<(), BenchError> {
    let (_, problem, target) = load(&args.common)?;
    let mut search = SearchConfig::new(args.common.playouts, args.common.cp, args.common.seed)?;
    search.target = target;
    let mut config = PipelineConfig::new(search).with_linear(args.common.linear_pipeline);
    if let Some(t) = args.tokens {
        config = config.with_tokens(t);
    }
    if let Some(t) = args.threads {
        config = config.with_threads(t);
    }
    let start = std::time::Instant::now();
    let result = args.scheduler.run(&problem, &config)?;
    let elapsed = start.elapsed();

    let label = |mv: usize| match &problem {
        Problem::Horner(p) => p.polynomial().var_names()[mv].clone(),
        Problem::Synthetic(_) => mv.to_string(),
    };
    println!("scheduler:  {}", args.scheduler);
    println!("playouts:   {}", result.playouts);
    println!("wall time:  {:.4}s", elapsed.as_secs_f64());
    println!("best move:  {}", result.best_move.map_or("-".into(), label));
    if let Some(best) = &result.best {
        let path: Vec<String> = best.moves.iter().map(|&m| label(m)).collect();
        println!("best path:  {}", path.join(" "));
        println!("reward:     {:.6}", best.reward);
        if let Some(ops) = best.cost {
            println!("ops:        {ops}");
        }
    }
    if let Problem::Horner(p) = &problem {
        println!("baseline:   {}", p.baseline_ops());
    }
    if let Some(hit) = result.playouts_to_target {
        println!("target hit: after {hit} playouts");
    }
    let tree = &result.tree;
    println!("tree:       {} nodes, depth {}", tree.node_count(), tree.max_depth());
    if args.dump {
        print!("{}", tree.dump());
    } else {
        for child in tree.root().children() {
            println!(
                "  {:<6} n={:<8} mean={:.4}",
                child.mv().map_or("-".into(), label),
                child.visits(),
                child.mean_reward()
            );
        }
    }
    Ok(())
}
