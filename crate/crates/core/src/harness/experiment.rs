//! Seeded multi-run experiments and their CSV output.
//!
//! An experiment runs seeds `base_seed..base_seed + n_seeds` of one
//! algorithm, each from the environment's initial state, and writes:
//!
//! | file                      | columns |
//! |---------------------------|---------|
//! | `config.txt`              | normalised configuration |
//! | `oracle.txt`              | `key = value` reference data |
//! | `summary.csv`             | `step,speed_mean,speed_std,pct_mean,pct_std,max_q_mean,max_q_std,activations_mean,activations_std,reference` |
//! | `qcurve.csv`              | `rank,q_best_mean,q_best_std` |
//! | `seeds/seed_<k>.csv`      | `step,speed,pct,max_q,activations` |
//! | `seeds/qcurve_<k>.csv`    | `rank,q_best` |
//!
//! Standard deviations are population deviations over the seeds. `pct` is
//! `100 · speed / optimal speed` and left empty when the optimum is not
//! positive. The q-curve is each run's final [`sorted_q_curve`]; its
//! aggregate covers the ranks every run reached.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::chain::{Chain, ChainConfig};
use crate::crawler::{enumerate_model, Crawler};
use crate::error::{Error, Result};
use crate::harness::config::{
    Algorithm, EnvironmentSpec, ExperimentConfig, FixedPeriod, HopperSpec,
};
use crate::harness::{evaluate_policy, sorted_q_curve};
use crate::hopping::{run_time_hopping, HopperConfig, SelectorKind, TriggerKind};
use crate::mdp::{Environment, QTable, StateId};
use crate::oracles::{brute_force_r_max, max_mean_cycle, optimal_gain, MeanCycle, ModelGraph};
use crate::qlearning::{run_conventional, CheckpointRecord, LearnerConfig, RunOutcome};

/// Largest reachable state count the exact cycle oracle is run on; its
/// table is quadratic in this number.
pub const WITNESS_STATE_LIMIT: usize = 4000;

/// An environment together with its exact model and reference values.
#[derive(Debug, Clone)]
pub struct PreparedEnvironment {
    pub spec: EnvironmentSpec,
    pub model: ModelGraph,
    pub initial: StateId,
    /// Largest single-step reward of the model.
    pub r_max: f64,
    /// Best achievable long-run reward per step from `initial`.
    pub optimal_speed: f64,
    witness_len: OnceLock<usize>,
}

impl PreparedEnvironment {
    pub fn new(spec: &EnvironmentSpec) -> Result<Self> {
        let (model, initial) = match spec {
            EnvironmentSpec::Crawler(c) => {
                let model = enumerate_model(c)?;
                let initial = Crawler::with_r_max(c.clone(), 0.0).initial_state();
                (model, initial)
            }
            EnvironmentSpec::Chain(c) => (c.model()?, StateId(0)),
        };
        let optimal_speed = if model.is_deterministic() {
            optimal_gain(&model, initial)?
        } else {
            max_mean_cycle(&model, initial).mean_reward
        };
        Ok(PreparedEnvironment {
            spec: spec.clone(),
            r_max: brute_force_r_max(&model),
            model,
            initial,
            optimal_speed,
            witness_len: OnceLock::new(),
        })
    }

    /// A shortest optimal cycle, when the reachable part of the model is
    /// small enough for the exact cycle oracle.
    pub fn witness(&self) -> Result<MeanCycle> {
        let reachable = self
            .model
            .reachable_from(self.initial)
            .iter()
            .filter(|&&r| r)
            .count();
        if reachable > WITNESS_STATE_LIMIT {
            return Err(Error::InvalidConfig(format!(
                "{reachable} reachable states exceed the exact cycle oracle's limit of {WITNESS_STATE_LIMIT}"
            )));
        }
        Ok(max_mean_cycle(&self.model, self.initial))
    }

    /// Greedy-policy speed of `q` (see [`evaluate_policy`]).
    pub fn evaluate(&self, q: &QTable) -> Result<f64> {
        evaluate_policy(q, &self.model, self.initial, self.model.state_count() + 1)
    }

    /// Percent of the optimum, when the optimum is positive.
    pub fn percent(&self, speed: f64) -> Option<f64> {
        (self.optimal_speed > 0.0).then(|| 100.0 * speed / self.optimal_speed)
    }

    fn hopper(&self, h: &HopperSpec) -> Result<HopperConfig> {
        let fixed_period = match h.fixed_period {
            FixedPeriod::Steps(n) => n,
            FixedPeriod::Witness => match self.witness_len.get() {
                Some(&n) => n as u64,
                None => {
                    let n = self.witness()?.len();
                    *self.witness_len.get_or_init(|| n) as u64
                }
            },
        };
        Ok(HopperConfig {
            trigger: h.trigger,
            fixed_period,
            selector: h.selector,
            r_max: h.r_max,
        })
    }

    /// One seeded run of `algorithm`.
    pub fn run(
        &self,
        algorithm: &Algorithm,
        learner: &LearnerConfig,
        total_steps: u64,
        checkpoints: &[u64],
    ) -> Result<RunOutcome> {
        let hopper = match algorithm {
            Algorithm::Conventional => None,
            Algorithm::TimeHopping(h) => Some(self.hopper(h)?),
        };
        let eval = |q: &QTable| self.evaluate(q);
        match &self.spec {
            EnvironmentSpec::Crawler(c) => {
                let mut env = Crawler::with_r_max(c.clone(), self.r_max);
                drive(
                    &mut env,
                    hopper.as_ref(),
                    learner,
                    total_steps,
                    checkpoints,
                    eval,
                )
            }
            EnvironmentSpec::Chain(c) => {
                let mut env = Chain::new(ChainConfig {
                    rng_seed: c.rng_seed.wrapping_add(learner.rng_seed),
                    ..c.clone()
                })?;
                drive(
                    &mut env,
                    hopper.as_ref(),
                    learner,
                    total_steps,
                    checkpoints,
                    eval,
                )
            }
        }
    }
}

fn drive<E, F>(
    env: &mut E,
    hopper: Option<&HopperConfig>,
    learner: &LearnerConfig,
    total_steps: u64,
    checkpoints: &[u64],
    eval: F,
) -> Result<RunOutcome>
where
    E: Environment,
    F: FnMut(&QTable) -> Result<f64>,
{
    match hopper {
        None => run_conventional(env, learner, total_steps, checkpoints, eval),
        Some(h) => run_time_hopping(env, learner, h, total_steps, checkpoints, eval),
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Panics on an empty slice.
    pub fn of(xs: &[f64]) -> Stat {
        assert!(!xs.is_empty(), "statistics of nothing");
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Stat {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub checkpoints: Vec<CheckpointRecord>,
    pub activations: u64,
    pub final_max_q: f64,
    /// Final best values of all visited states, largest first.
    pub q_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSummary {
    pub step: u64,
    pub speed: Stat,
    pub pct: Option<Stat>,
    pub max_q: Stat,
    pub activations: Stat,
}

/// Per-checkpoint statistics over all seeds of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub label: String,
    pub n_seeds: usize,
    pub optimal_speed: f64,
    pub r_max: f64,
    pub checkpoints: Vec<CheckpointSummary>,
    /// Rank-wise statistics of the final q-curves, over the ranks every run
    /// reached.
    pub q_curve: Vec<Stat>,
    pub runs: Vec<SeedRun>,
}

/// Label of the percent reference: the exact optimum.
pub const REFERENCE_OPTIMAL: &str = "optimal";

/// Runs every seed of `cfg` on `jobs` worker threads without writing
/// anything.
pub fn execute(cfg: &ExperimentConfig, jobs: usize) -> Result<EvaluationReport> {
    cfg.validate()?;
    let prepared = PreparedEnvironment::new(&cfg.environment)?;
    execute_prepared(cfg, &prepared, jobs)
}

/// [`execute`] on an already prepared environment.
pub fn execute_prepared(
    cfg: &ExperimentConfig,
    prepared: &PreparedEnvironment,
    jobs: usize,
) -> Result<EvaluationReport> {
    cfg.validate()?;
    let checkpoints = cfg.checkpoint_steps();
    let seeds: Vec<u64> = cfg.seeds().collect();
    let run_seed = |&seed: &u64| -> Result<SeedRun> {
        let learner = LearnerConfig {
            rng_seed: seed,
            ..cfg.learner
        };
        let out = prepared.run(&cfg.algorithm, &learner, cfg.total_steps, &checkpoints)?;
        Ok(SeedRun {
            seed,
            q_curve: sorted_q_curve(&out.q, &out.metrics.visits.visited()),
            final_max_q: out.q.max_value(),
            activations: out.metrics.activations,
            checkpoints: out.metrics.checkpoints,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Workers(format!("cannot start {jobs} workers: {e}")))?;
    let runs: Vec<SeedRun> =
        pool.install(|| seeds.par_iter().map(run_seed).collect::<Result<_>>())?;
    Ok(summarise(
        cfg.algorithm.label(),
        prepared,
        &checkpoints,
        runs,
    ))
}

fn summarise(
    label: String,
    prepared: &PreparedEnvironment,
    checkpoints: &[u64],
    runs: Vec<SeedRun>,
) -> EvaluationReport {
    let column = |i: usize, f: &dyn Fn(&CheckpointRecord) -> f64| -> Vec<f64> {
        runs.iter().map(|r| f(&r.checkpoints[i])).collect()
    };
    let summaries = checkpoints
        .iter()
        .enumerate()
        .map(|(i, &step)| {
            let speeds = column(i, &|c| c.score);
            let pct: Option<Vec<f64>> = speeds.iter().map(|&s| prepared.percent(s)).collect();
            CheckpointSummary {
                step,
                speed: Stat::of(&speeds),
                pct: pct.map(|p| Stat::of(&p)),
                max_q: Stat::of(&column(i, &|c| c.max_q)),
                activations: Stat::of(&column(i, &|c| c.activations as f64)),
            }
        })
        .collect();
    let depth = runs.iter().map(|r| r.q_curve.len()).min().unwrap_or(0);
    let q_curve = (0..depth)
        .map(|k| Stat::of(&runs.iter().map(|r| r.q_curve[k]).collect::<Vec<_>>()))
        .collect();
    EvaluationReport {
        label,
        n_seeds: runs.len(),
        optimal_speed: prepared.optimal_speed,
        r_max: prepared.r_max,
        checkpoints: summaries,
        q_curve,
        runs,
    }
}

/// Runs the experiment and writes its output tree to `cfg.output`.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<EvaluationReport> {
    let report = execute(cfg, jobs)?;
    write_report(&report, cfg, &cfg.output)?;
    Ok(report)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| Error::io(path, e);
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>())
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the files listed in the module docs into `dir`.
pub fn write_report(report: &EvaluationReport, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let seeds_dir = dir.join("seeds");
    fs::create_dir_all(&seeds_dir).map_err(|e| Error::io(&seeds_dir, e))?;
    write_text(&dir.join("config.txt"), &cfg.to_text())?;
    write_text(
        &dir.join("oracle.txt"),
        &format!(
            "label = {}\nreference = {}\noptimal_speed = {}\nr_max = {}\nn_seeds = {}\n",
            report.label,
            if report.optimal_speed > 0.0 {
                REFERENCE_OPTIMAL
            } else {
                "none"
            },
            report.optimal_speed,
            report.r_max,
            report.n_seeds
        ),
    )?;
    let reference = if report.optimal_speed > 0.0 {
        REFERENCE_OPTIMAL
    } else {
        ""
    };
    write_rows(
        &dir.join("summary.csv"),
        &[
            "step",
            "speed_mean",
            "speed_std",
            "pct_mean",
            "pct_std",
            "max_q_mean",
            "max_q_std",
            "activations_mean",
            "activations_std",
            "reference",
        ],
        report.checkpoints.iter().map(|c| {
            vec![
                c.step.to_string(),
                c.speed.mean.to_string(),
                c.speed.std.to_string(),
                opt(c.pct.map(|p| p.mean)),
                opt(c.pct.map(|p| p.std)),
                c.max_q.mean.to_string(),
                c.max_q.std.to_string(),
                c.activations.mean.to_string(),
                c.activations.std.to_string(),
                reference.to_string(),
            ]
        }),
    )?;
    write_rows(
        &dir.join("qcurve.csv"),
        &["rank", "q_best_mean", "q_best_std"],
        report
            .q_curve
            .iter()
            .enumerate()
            .map(|(k, s)| vec![(k + 1).to_string(), s.mean.to_string(), s.std.to_string()]),
    )?;
    for run in &report.runs {
        let pct =
            |speed: f64| (report.optimal_speed > 0.0).then(|| 100.0 * speed / report.optimal_speed);
        write_rows(
            &seeds_dir.join(format!("seed_{}.csv", run.seed)),
            &["step", "speed", "pct", "max_q", "activations"],
            run.checkpoints.iter().map(|c| {
                vec![
                    c.step.to_string(),
                    c.score.to_string(),
                    opt(pct(c.score)),
                    c.max_q.to_string(),
                    c.activations.to_string(),
                ]
            }),
        )?;
        write_rows(
            &seeds_dir.join(format!("qcurve_{}.csv", run.seed)),
            &["rank", "q_best"],
            run.q_curve
                .iter()
                .enumerate()
                .map(|(k, q)| vec![(k + 1).to_string(), q.to_string()]),
        )?;
    }
    Ok(())
}

/// The four comparison runs plus the baseline, each writing to its own
/// subdirectory of `cfg.output` named after [`Algorithm::label`]. Hopper
/// settings other than trigger and selector are taken from `cfg`.
pub fn sweep_configs(cfg: &ExperimentConfig) -> Vec<ExperimentConfig> {
    let base = match cfg.algorithm {
        Algorithm::TimeHopping(h) => h,
        Algorithm::Conventional => HopperSpec::default(),
    };
    let mut algorithms = vec![Algorithm::Conventional];
    for trigger in [TriggerKind::GammaPruning, TriggerKind::Fixed] {
        for selector in [SelectorKind::Lasso, SelectorKind::Random] {
            algorithms.push(Algorithm::TimeHopping(HopperSpec {
                trigger,
                selector,
                ..base
            }));
        }
    }
    algorithms
        .into_iter()
        .map(|algorithm| ExperimentConfig {
            algorithm,
            output: cfg.output.join(algorithm.label()),
            ..cfg.clone()
        })
        .collect()
}

/// Runs every configuration of [`sweep_configs`], sharing one prepared
/// environment, and writes each output tree.
pub fn run_sweep(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<(PathBuf, EvaluationReport)>> {
    cfg.validate()?;
    let prepared = PreparedEnvironment::new(&cfg.environment)?;
    sweep_configs(cfg)
        .into_iter()
        .map(|c| {
            let report = execute_prepared(&c, &prepared, jobs)?;
            write_report(&report, &c, &c.output)?;
            Ok((c.output.clone(), report))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::CheckpointSpec;

    fn chain_cfg(algorithm: Algorithm, n_seeds: u64) -> ExperimentConfig {
        ExperimentConfig {
            environment: EnvironmentSpec::Chain(ChainConfig::default()),
            algorithm,
            total_steps: 300,
            checkpoints: CheckpointSpec::Every(100),
            n_seeds,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn stat_is_population_based() {
        assert_eq!(
            Stat::of(&[2.0]),
            Stat {
                mean: 2.0,
                std: 0.0
            }
        );
        let s = Stat::of(&[1.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
    }

    #[test]
    fn single_seed_has_zero_spread() {
        let cfg = ExperimentConfig {
            environment: EnvironmentSpec::Crawler(crate::crawler::CrawlerConfig::reduced()),
            total_steps: 2000,
            n_seeds: 1,
            ..ExperimentConfig::default()
        };
        let report = execute(&cfg, 1).unwrap();
        assert_eq!(report.checkpoints.len(), 2);
        for c in &report.checkpoints {
            assert_eq!(c.speed.std, 0.0);
            assert_eq!(c.max_q.std, 0.0);
            assert_eq!(c.activations.std, 0.0);
            assert_eq!(c.pct.unwrap().std, 0.0);
        }
        assert!(report.q_curve.iter().all(|s| s.std == 0.0));
    }

    #[test]
    fn seeds_are_independent_of_worker_count() {
        let cfg = chain_cfg(Algorithm::TimeHopping(HopperSpec::default()), 4);
        assert_eq!(execute(&cfg, 1).unwrap(), execute(&cfg, 3).unwrap());
    }

    #[test]
    fn chain_percent_is_undefined() {
        let report = execute(&chain_cfg(Algorithm::Conventional, 2), 1).unwrap();
        assert_eq!(report.optimal_speed, 0.0);
        assert!(report.checkpoints.iter().all(|c| c.pct.is_none()));
    }

    #[test]
    fn sweep_covers_every_combination() {
        let labels: Vec<String> = sweep_configs(&ExperimentConfig::default())
            .iter()
            .map(|c| c.algorithm.label())
            .collect();
        assert_eq!(
            labels,
            [
                "conventional",
                "gamma-lasso",
                "gamma-random",
                "fixed-lasso",
                "fixed-random"
            ]
        );
    }
}
