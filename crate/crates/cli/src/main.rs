mod predict_demo;
mod qp_check;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use cbfrrt::error::ScenarioError;
use cbfrrt::params::{CommitHorizon, ParamOverrides, PlannerParams};
use cbfrrt::planner::Budget;
use cbfrrt::scenario::{builtin_names, builtin_text, parse_scenario, ScenarioSpec};
use cbfrrt::sim::{run_scenario_with, SimOutcome, Termination};
use cbfrrt::trace::{emit_plot_csv, emit_trace, fmt_num};

const EXIT_OK: u8 = 0;
const EXIT_IO: u8 = 1;
const EXIT_SPEC: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;
const EXIT_COLLISION: u8 = 4;

#[derive(Parser)]
#[command(name = "cbfrrt", version, about = "CBF-TB-RRT planner and corridor simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Plan(PlanArgs),
    /// Run a batch of seeds and summarize the outcomes.
    Sweep(SweepArgs),
    /// Check the steering QP solver against KKT and grid oracles.
    QpCheck(qp_check::QpCheckArgs),
    /// Dump occupancy maps and discs for a walking-pedestrian fixture.
    PredictDemo(predict_demo::PredictDemoArgs),
    /// List the built-in scenarios.
    Scenarios,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Built-in scenario name or path to a scenario file.
    scenario: String,
    #[arg(long, default_value_t = 120.0)]
    max_time: f64,
    /// `1` executes one control per cycle, `Ns` a whole segment.
    #[arg(long)]
    commit_horizon: Option<CommitHorizon>,
    /// TOML file with parameter overrides.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Grow for this many milliseconds per cycle instead of a node budget.
    #[arg(long)]
    deadline_ms: Option<u64>,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON-lines trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write `time,v,omega,min_h` columns here.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
}

#[derive(Debug)]
enum CliError {
    Io(String),
    Spec(String),
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Spec(e.to_string())
    }
}

fn load_scenario(arg: &str) -> Result<ScenarioSpec, CliError> {
    let path = Path::new(arg);
    let text = if path.exists() {
        std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{arg}: {e}")))?
    } else if let Some(t) = builtin_text(arg) {
        t.to_string()
    } else {
        let names: Vec<_> = builtin_names().collect();
        return Err(CliError::Spec(format!("{arg}: no such file or built-in scenario (built-ins: {})", names.join(", "))));
    };
    parse_scenario(&text).map_err(|e| CliError::Spec(format!("{arg}: {e}")))
}

fn resolve_params(spec: &ScenarioSpec, run: &RunArgs) -> Result<PlannerParams, CliError> {
    let mut params = spec.planner_params();
    if let Some(path) = &run.params {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let o: ParamOverrides = toml::from_str(&text).map_err(|e| CliError::Spec(format!("{}: {e}", path.display())))?;
        o.apply(&mut params);
    }
    if let Some(c) = run.commit_horizon {
        params.commit_horizon = c;
    }
    params.validate().map_err(CliError::Spec)?;
    Ok(params)
}

fn budget(run: &RunArgs, params: &PlannerParams) -> Budget {
    match run.deadline_ms {
        Some(ms) => Budget::Deadline(Duration::from_millis(ms)),
        None => Budget::Nodes(params.node_budget),
    }
}

fn describe(o: &SimOutcome) -> String {
    let what = match o.termination {
        Termination::Goal => "goal",
        Termination::Collision => "collision",
        Termination::Timeout => "timeout",
    };
    format!(
        "{what} t={:.1}s steps={} min_h={} min_clearance={} waits={} fallbacks={}",
        o.time_to_goal,
        o.steps,
        fmt_num(o.min_h),
        fmt_num(o.min_clearance),
        o.wait_cycles,
        o.fallback_cycles
    )
}

fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<usize>,
{
    let err = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(err)?);
    f(&mut w).map_err(err)?;
    w.flush().map_err(err)
}

fn plan(args: PlanArgs) -> Result<u8, CliError> {
    let spec = load_scenario(&args.run.scenario)?;
    let mut params = resolve_params(&spec, &args.run)?;
    if let Some(seed) = args.seed {
        params.seed = seed;
    }
    let (outcome, trace) = run_scenario_with(&spec, &params, args.run.max_time, budget(&args.run, &params))?;
    if let Some(path) = &args.trace {
        write_with(path, |w| emit_trace(&trace, w))?;
    }
    if let Some(path) = &args.plot {
        write_with(path, |w| emit_plot_csv(&trace, w))?;
    }
    println!("{} seed={} {}", spec.name, params.seed, describe(&outcome));
    Ok(match outcome.termination {
        Termination::Goal => EXIT_OK,
        Termination::Timeout => EXIT_TIMEOUT,
        Termination::Collision => EXIT_COLLISION,
    })
}

fn sweep(args: SweepArgs) -> Result<u8, CliError> {
    let spec = load_scenario(&args.run.scenario)?;
    let base = resolve_params(&spec, &args.run)?;
    let seeds: Vec<u64> = (args.first_seed..args.first_seed + args.seeds).collect();
    let results: Vec<Result<(u64, SimOutcome), ScenarioError>> = seeds
        .par_iter()
        .map(|&seed| {
            let params = PlannerParams { seed, ..base.clone() };
            run_scenario_with(&spec, &params, args.run.max_time, budget(&args.run, &params)).map(|(o, _)| (seed, o))
        })
        .collect();
    let mut outcomes = Vec::with_capacity(results.len());
    for r in results {
        outcomes.push(r?);
    }
    for (seed, o) in &outcomes {
        println!("seed {seed:>4}: {}", describe(o));
    }
    let successes: Vec<&SimOutcome> = outcomes.iter().map(|(_, o)| o).filter(|o| o.success).collect();
    let collisions = outcomes.iter().filter(|(_, o)| o.collision).count();
    let timeouts = outcomes.iter().filter(|(_, o)| o.termination == Termination::Timeout).count();
    let mean_time = if successes.is_empty() {
        f64::NAN
    } else {
        successes.iter().map(|o| o.time_to_goal).sum::<f64>() / successes.len() as f64
    };
    let min_h = outcomes.iter().map(|(_, o)| o.min_h).fold(f64::INFINITY, f64::min);
    let min_clear = outcomes.iter().map(|(_, o)| o.min_clearance).fold(f64::INFINITY, f64::min);
    println!(
        "{}: runs={} success={} collisions={} timeouts={} mean_time_to_goal={} min_h={} min_clearance={}",
        spec.name,
        outcomes.len(),
        successes.len(),
        collisions,
        timeouts,
        fmt_num(mean_time),
        fmt_num(min_h),
        fmt_num(min_clear)
    );
    Ok(if collisions > 0 { EXIT_COLLISION } else { EXIT_OK })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan(a) => plan(a),
        Command::Sweep(a) => sweep(a),
        Command::QpCheck(a) => qp_check::run(a).map_err(CliError::Io),
        Command::PredictDemo(a) => predict_demo::run(a).map_err(CliError::Io),
        Command::Scenarios => {
            for n in builtin_names() {
                println!("{n}");
            }
            Ok(EXIT_OK)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_IO)
        }
        Err(CliError::Spec(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_SPEC)
        }
    }
}
