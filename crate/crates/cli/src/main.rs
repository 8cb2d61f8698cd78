//! `refcrdt`: run random campaigns, check stored traces, explore small
//! programs exhaustively, run the preset scenarios and export graphs.
//!
//! Exit codes: 0 when every check passes, 1 on an invariant violation or
//! failed assertion, 2 on bad input (flags, files, ranges).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use refcrdt::harness::campaign::run_campaign;
use refcrdt::harness::catalog;
use refcrdt::harness::check::{check_invariants, TRACE_INVARIANTS};
use refcrdt::harness::explore::{Limits, EXPLORED_INVARIANTS};
use refcrdt::harness::random::random_execution;
use refcrdt::harness::replay::replay;
use refcrdt::harness::Config;
use refcrdt::{dot, scenario, tracefile, CompositionMode, ReplicaId};

/// Largest program the explore command accepts.
const MAX_EXPLORE_EVENTS: usize = 5;

#[derive(Parser)]
#[command(name = "refcrdt", version, about = "Reference CRDT simulator and checker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Atomic,
    PureCausal,
}

impl From<Mode> for CompositionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Atomic => CompositionMode::Atomic,
            Mode::PureCausal => CompositionMode::PureCausal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Fig1,
    Fig2,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and check random executions.
    Run {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        executions: usize,
        #[arg(long, default_value_t = 20)]
        events: usize,
        #[arg(long, default_value_t = 3)]
        replicas: usize,
        #[arg(long, value_enum, default_value_t = Mode::PureCausal)]
        mode: Mode,
        /// Directory receiving the (shrunk) traces of failing executions.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print one random execution as a trace file.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        events: usize,
        #[arg(long, default_value_t = 3)]
        replicas: usize,
        #[arg(long, value_enum, default_value_t = Mode::PureCausal)]
        mode: Mode,
    },
    /// Replay a trace file and check every invariant.
    Check { file: PathBuf },
    /// Explore every program of the operation catalog exhaustively.
    Explore {
        /// Maximum number of operations per program.
        #[arg(long, default_value_t = 3)]
        events: usize,
        /// Use the built-in operation catalog (currently the only source
        /// of programs, so this is the default).
        #[arg(long)]
        catalog: bool,
    },
    /// Run a preset scenario and assert its outcome: `fig1` is the
    /// copy/delete race, `fig2` the concurrent assignments.
    Scenario {
        #[arg(value_enum)]
        name: Preset,
        /// Directory receiving one graph document per replica.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Print the object graph of one replica after a trace step.
    ExportDot {
        file: PathBuf,
        #[arg(long)]
        step: usize,
        #[arg(long)]
        replica: u16,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run {
            seed,
            executions,
            events,
            replicas,
            mode,
            out,
        } => cmd_run(seed, executions, events, replicas, mode.into(), out.as_deref()),
        Command::Generate {
            seed,
            events,
            replicas,
            mode,
        } => cmd_generate(seed, events, replicas, mode.into()),
        Command::Check { file } => cmd_check(&file),
        Command::Explore { events, catalog: _ } => cmd_explore(events),
        Command::Scenario { name, dot } => cmd_scenario(name, dot.as_deref()),
        Command::ExportDot { file, step, replica } => cmd_export_dot(&file, step, ReplicaId(replica)),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn cmd_run(
    seed: u64,
    executions: usize,
    events: usize,
    replicas: usize,
    mode: CompositionMode,
    out: Option<&Path>,
) -> Result<bool> {
    if executions == 0 {
        bail!("--executions must be at least 1");
    }
    let config = Config {
        replicas,
        events,
        mode,
        ..Config::default()
    };
    config.validate()?;
    let result = run_campaign(seed, executions, &config, out.is_some())?;
    let report = &result.report;
    println!("{executions} executions, seed {seed}, {replicas} replicas, {events} events, {mode}");
    print!("{}", report.render(&TRACE_INVARIANTS));
    let c = &report.coverage;
    println!(
        "coverage: {} steps, {} failed operations, {} traces with multi-valued outrefs, {} deletes, {} stable queries, {} liveness deletes",
        c.steps, c.failed_ops, c.multi_valued_traces, c.deletes, c.stable_queries, c.liveness_deletes
    );
    for f in &result.failures {
        let names: Vec<&str> = f.invariants.iter().map(|i| i.name()).collect();
        println!("execution {} (seed {}) violates {}", f.index, f.seed, names.join(", "));
    }
    if let Some(dir) = out {
        if !result.failures.is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        for f in &result.failures {
            let trace = f.shrunk.as_ref().unwrap_or(&f.trace);
            let path = dir.join(format!("execution-{}.trace", f.index));
            fs::write(&path, tracefile::serialize(trace)).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    println!("violations: {}", report.total());
    Ok(report.is_clean())
}

fn cmd_generate(seed: u64, events: usize, replicas: usize, mode: CompositionMode) -> Result<bool> {
    let config = Config {
        replicas,
        events,
        mode,
        ..Config::default()
    };
    let trace = random_execution(seed, &config)?;
    print!("{}", tracefile::serialize(&trace));
    Ok(true)
}

fn read_trace(file: &Path) -> Result<refcrdt::harness::Trace> {
    let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    tracefile::parse(&text).with_context(|| format!("parsing {}", file.display()))
}

fn cmd_check(file: &Path) -> Result<bool> {
    let trace = read_trace(file)?;
    let report = check_invariants(&trace)?;
    println!(
        "seed {}, {} steps ({} events, {} deliveries)",
        trace.seed,
        trace.len(),
        trace.event_count(),
        trace.delivery_count()
    );
    print!("{}", report.render(&TRACE_INVARIANTS));
    println!("violations: {}", report.total());
    Ok(report.is_clean())
}

fn cmd_explore(events: usize) -> Result<bool> {
    if events > MAX_EXPLORE_EVENTS {
        bail!("--events {events} exceeds the bound {MAX_EXPLORE_EVENTS}");
    }
    let summary = catalog::explore_all(events, Limits::new(MAX_EXPLORE_EVENTS))?;
    println!(
        "{} programs of at most {events} operations over {} catalog operations",
        summary.programs,
        catalog::operations().len()
    );
    println!(
        "states: {} pure-causal, {} atomic; {} terminal",
        summary.causal_states, summary.atomic_states, summary.terminal_states
    );
    print!("{}", summary.report.render(&EXPLORED_INVARIANTS));
    println!("violations: {}", summary.report.total());
    Ok(summary.report.is_clean())
}

fn cmd_scenario(name: Preset, dot_dir: Option<&Path>) -> Result<bool> {
    let run = match name {
        Preset::Fig1 => scenario::fig1(),
        Preset::Fig2 => scenario::fig2(),
    };
    println!("scenario {}", run.name);
    for c in &run.checks {
        let mark = if c.passed { "pass" } else { "FAIL" };
        if c.detail.is_empty() {
            println!("  {mark}  {}", c.name);
        } else {
            println!("  {mark}  {} ({})", c.name, c.detail);
        }
    }
    if let Some(dir) = dot_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for r in run.world.replica_ids() {
            let path = dir.join(format!("{}-{r}.dot", run.name));
            let doc = dot::snapshot(&run.world, r, |k| run.alias(k));
            fs::write(&path, doc).with_context(|| format!("writing {}", path.display()))?;
            println!("  wrote {}", path.display());
        }
    }
    Ok(run.passed())
}

fn cmd_export_dot(file: &Path, step: usize, replica: ReplicaId) -> Result<bool> {
    let mut trace = read_trace(file)?;
    if step >= trace.len() {
        bail!("step {step} out of range: the trace has {} steps", trace.len());
    }
    if replica.index() >= trace.config.replicas {
        bail!(
            "replica {replica} out of range: the trace has {} replicas",
            trace.config.replicas
        );
    }
    trace.steps.truncate(step + 1);
    let world = replay(&trace)?;
    print!("{}", dot::snapshot(&world, replica, |_| None));
    Ok(true)
}
