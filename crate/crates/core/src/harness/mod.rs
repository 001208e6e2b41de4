//! Experiment harness: policy evaluation, seeded multi-run experiments,
//! configuration files and CSV emission.

pub mod config;
mod eval;
pub mod experiment;
pub mod figures;

pub use config::{
    Algorithm, CheckpointSpec, EnvironmentSpec, ExperimentConfig, FixedPeriod, HopperSpec,
};
pub use eval::{evaluate_policy, sorted_q_curve};
pub use experiment::{
    execute, execute_prepared, run_experiment, run_sweep, sweep_configs, write_report,
    CheckpointSummary, EvaluationReport, PreparedEnvironment, SeedRun, Stat,
};
pub use figures::{emit_figure_data, load_runs, FigureOutput, LoadedRun};
