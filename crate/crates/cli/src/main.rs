//! `timehop` command line: run experiments, sweeps, oracles and figure data.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use timehop::harness::{
    emit_figure_data, load_runs, run_experiment, run_sweep, EvaluationReport, ExperimentConfig,
    PreparedEnvironment,
};
use timehop::mdp::{ActionId, StateId};
use timehop::Error;

#[derive(Debug, Parser)]
#[command(
    name = "timehop",
    version,
    about = "Q-learning with Time Hopping experiments"
)]
struct Cli {
    /// First seed; overrides `base_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Transitions per run; overrides `total_steps`.
    #[arg(long, global = true)]
    steps: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    jobs: Option<NonZeroUsize>,
    /// Output directory; overrides `output` (for figdata: where the figure
    /// files go, default `<dir>/figures`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one configured experiment over all its seeds.
    Run { config: PathBuf },
    /// Run the baseline and all four trigger/selector combinations.
    Sweep { config: PathBuf },
    /// Print reference values for the configured environment.
    Oracle { config: PathBuf },
    /// Assemble figure CSVs from experiment output directories.
    Figdata { dir: PathBuf },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load_config(cli: &Cli, path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    if let Some(seed) = cli.seed {
        cfg.base_seed = seed;
    }
    if let Some(steps) = cli.steps {
        cfg.total_steps = steps;
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    cfg.validate()
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

fn jobs(cli: &Cli) -> usize {
    cli.jobs
        .or_else(|| std::thread::available_parallelism().ok())
        .map_or(1, NonZeroUsize::get)
}

fn describe(report: &EvaluationReport, dir: &Path) -> String {
    let last = report.checkpoints.last();
    let mut s = format!(
        "{}: {} seeds -> {}",
        report.label,
        report.n_seeds,
        dir.display()
    );
    if let Some(c) = last {
        let _ = write!(s, "; step {} speed {:.6}", c.step, c.speed.mean);
        if let Some(p) = c.pct {
            let _ = write!(s, " ({:.2}% of optimal)", p.mean);
        }
    }
    s
}

/// Fewest transitions from the initial state to any of `targets`.
fn steps_to_reach(prepared: &PreparedEnvironment, targets: &[StateId]) -> Option<usize> {
    let model = &prepared.model;
    let mut dist = vec![usize::MAX; model.state_count()];
    let mut queue = VecDeque::from([prepared.initial]);
    dist[prepared.initial.index()] = 0;
    while let Some(s) = queue.pop_front() {
        if targets.contains(&s) {
            return Some(dist[s.index()]);
        }
        for a in 0..model.action_count() {
            for o in model.outcomes(s, ActionId::new(a)) {
                if dist[o.to.index()] == usize::MAX {
                    dist[o.to.index()] = dist[s.index()] + 1;
                    queue.push_back(o.to);
                }
            }
        }
    }
    None
}

fn oracle_text(cfg: &ExperimentConfig) -> Result<String, Failure> {
    let prepared = PreparedEnvironment::new(&cfg.environment)?;
    let reachable = prepared
        .model
        .reachable_from(prepared.initial)
        .iter()
        .filter(|&&r| r)
        .count();
    let mut s = String::new();
    let _ = writeln!(s, "states = {}", prepared.model.state_count());
    let _ = writeln!(s, "reachable_states = {reachable}");
    let _ = writeln!(s, "initial_state = {}", prepared.initial.0);
    let _ = writeln!(s, "r_max = {}", prepared.r_max);
    let _ = writeln!(s, "optimal_speed = {}", prepared.optimal_speed);
    match prepared.witness() {
        Ok(w) => {
            let on_cycle: Vec<StateId> = w.cycle.iter().map(|&(st, _)| st).collect();
            let _ = writeln!(s, "witness_length = {}", w.len());
            match steps_to_reach(&prepared, &on_cycle) {
                Some(d) => {
                    let _ = writeln!(s, "witness_prefix_length = {d}");
                }
                None => {
                    let _ = writeln!(s, "witness_prefix_length = unreachable");
                }
            }
            let steps: Vec<String> = w
                .cycle
                .iter()
                .map(|(st, a)| format!("{}:{}", st.0, a.0))
                .collect();
            let _ = writeln!(s, "witness = {}", steps.join(" "));
        }
        Err(e) => {
            let _ = writeln!(s, "witness = unavailable ({e})");
        }
    }
    Ok(s)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load_config(cli, config)?;
            let report = run_experiment(&cfg, jobs(cli))?;
            println!("{}", describe(&report, &cfg.output));
        }
        Command::Sweep { config } => {
            let cfg = load_config(cli, config)?;
            for (dir, report) in run_sweep(&cfg, jobs(cli))? {
                println!("{}", describe(&report, &dir));
            }
        }
        Command::Oracle { config } => {
            let cfg = load_config(cli, config)?;
            let text = oracle_text(&cfg)?;
            print!("{text}");
            if let Some(out) = &cli.out {
                fs::create_dir_all(out)
                    .and_then(|_| fs::write(out.join("oracle.txt"), &text))
                    .map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
            }
        }
        Command::Figdata { dir } => {
            let runs = load_runs(dir)?;
            let out = cli.out.clone().unwrap_or_else(|| dir.join("figures"));
            let figs = emit_figure_data(&runs, &out)?;
            for path in &figs.written {
                println!("wrote {}", path.display());
            }
            for (fig, why) in &figs.skipped {
                eprintln!("skipped {fig}: {why}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
