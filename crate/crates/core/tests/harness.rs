use std::fs;
use std::path::Path;

use timehop::chain::ChainConfig;
use timehop::crawler::CrawlerConfig;
use timehop::harness::{
    emit_figure_data, execute, load_runs, run_experiment, run_sweep, Algorithm, CheckpointSpec,
    EnvironmentSpec, ExperimentConfig, HopperSpec,
};
use timehop::qlearning::LearnerConfig;
use timehop::Error;

fn reduced_cfg(out: &Path, steps: u64, every: u64, n_seeds: u64) -> ExperimentConfig {
    ExperimentConfig {
        environment: EnvironmentSpec::Crawler(CrawlerConfig::reduced()),
        algorithm: Algorithm::TimeHopping(HopperSpec::default()),
        learner: LearnerConfig::default(),
        total_steps: steps,
        checkpoints: CheckpointSpec::Every(every),
        n_seeds,
        base_seed: 3,
        output: out.to_path_buf(),
    }
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    assert!(
        !text.contains('\r'),
        "{} must use LF line endings",
        path.display()
    );
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn aggregates_are_recomputable_from_seed_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reduced_cfg(&dir.path().join("run"), 6000, 1000, 4);
    run_experiment(&cfg, 2).unwrap();
    let (header, summary) = read_csv(&cfg.output.join("summary.csv"));
    assert_eq!(
        header,
        [
            "step",
            "speed_mean",
            "speed_std",
            "pct_mean",
            "pct_std",
            "max_q_mean",
            "max_q_std",
            "activations_mean",
            "activations_std",
            "reference"
        ]
    );
    let seeds: Vec<Vec<Vec<String>>> = (3..7)
        .map(|k| read_csv(&cfg.output.join(format!("seeds/seed_{k}.csv"))).1)
        .collect();
    for (i, row) in summary.iter().enumerate() {
        for (col, seed_col) in [(1, 1), (3, 2), (5, 3), (7, 4)] {
            let xs: Vec<f64> = seeds.iter().map(|s| num(&s[i][seed_col])).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
            assert!((num(&row[col]) - mean).abs() <= 1e-12 * mean.abs().max(1.0));
            assert!((num(&row[col + 1]) - std).abs() <= 1e-12 * std.abs().max(1.0));
        }
        assert_eq!(row[9], "optimal");
    }
}

#[test]
fn one_run_with_three_checkpoints_gives_three_fig9_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        algorithm: Algorithm::Conventional,
        checkpoints: CheckpointSpec::List(vec![1000, 2000, 3000]),
        ..reduced_cfg(&dir.path().join("conventional"), 3000, 1000, 2)
    };
    run_experiment(&cfg, 1).unwrap();
    let runs = load_runs(&cfg.output).unwrap();
    let figs = emit_figure_data(&runs, &dir.path().join("figs")).unwrap();
    assert_eq!(figs.written.len(), 2, "fig9 and fig10 only");
    let (header, rows) = read_csv(&dir.path().join("figs/fig9.csv"));
    assert_eq!(
        header,
        ["step", "algorithm", "mean_pct", "stddev", "reference"]
    );
    assert_eq!(rows.len(), 3);
    assert!(rows
        .iter()
        .all(|r| r[1] == "conventional" && r[4] == "optimal"));
}

#[test]
fn sweep_figures_are_complete_monotone_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reduced_cfg(&dir.path().join("sweep"), 5000, 1000, 2);
    let mut trees = Vec::new();
    for attempt in 0..2 {
        run_sweep(&cfg, 1).unwrap();
        let figs = dir.path().join(format!("figs{attempt}"));
        let out = emit_figure_data(&load_runs(&cfg.output).unwrap(), &figs).unwrap();
        assert_eq!(out.written.len(), 4);
        assert!(out.skipped.is_empty());
        let files: Vec<Vec<u8>> = ["fig9", "fig10", "fig11", "fig12"]
            .iter()
            .map(|f| fs::read(figs.join(format!("{f}.csv"))).unwrap())
            .collect();
        trees.push(files);
        fs::remove_dir_all(&cfg.output).unwrap();
    }
    assert_eq!(trees[0], trees[1]);

    let figs = dir.path().join("figs0");
    let (header, rows) = read_csv(&figs.join("fig11.csv"));
    assert_eq!(header, ["step", "trigger", "activations"]);
    for trigger in ["gamma", "fixed"] {
        let acts: Vec<f64> = rows
            .iter()
            .filter(|r| r[1] == trigger)
            .map(|r| num(&r[2]))
            .collect();
        assert_eq!(acts.len(), 5);
        assert!(acts.windows(2).all(|w| w[0] <= w[1]), "{trigger}: {acts:?}");
    }
    let (header, rows) = read_csv(&figs.join("fig12.csv"));
    assert_eq!(header, ["step", "selector", "max_q"]);
    assert_eq!(rows.iter().filter(|r| r[1] == "lasso").count(), 5);
    assert_eq!(rows.iter().filter(|r| r[1] == "random").count(), 5);
    let (header, rows) = read_csv(&figs.join("fig10.csv"));
    assert_eq!(header, ["rank", "algorithm", "q_best"]);
    for algorithm in ["conventional", "time_hopping"] {
        let q: Vec<f64> = rows
            .iter()
            .filter(|r| r[1] == algorithm)
            .map(|r| num(&r[2]))
            .collect();
        assert!(!q.is_empty());
        assert!(
            q.windows(2).all(|w| w[0] >= w[1]),
            "{algorithm} curve must descend"
        );
    }
}

#[test]
fn zero_speed_chain_has_no_percentages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        environment: EnvironmentSpec::Chain(ChainConfig {
            advance_probs: vec![1.0, 1.0, 1.0],
            ..ChainConfig::default()
        }),
        algorithm: Algorithm::Conventional,
        learner: LearnerConfig::default(),
        total_steps: 2000,
        checkpoints: CheckpointSpec::Every(1000),
        n_seeds: 2,
        base_seed: 0,
        output: dir.path().join("conventional"),
    };
    run_experiment(&cfg, 1).unwrap();
    let (_, summary) = read_csv(&cfg.output.join("summary.csv"));
    assert!(summary.iter().all(|r| r[3].is_empty() && r[9].is_empty()));
    emit_figure_data(&load_runs(dir.path()).unwrap(), &dir.path().join("figs")).unwrap();
    let (_, rows) = read_csv(&dir.path().join("figs/fig9.csv"));
    // The deterministic chain's best cycle is a zero-reward loop, so there is
    // no positive speed to compare against.
    assert!(rows.iter().all(|r| r[4] == "none" && r[2].is_empty()));
}

#[test]
fn unknown_optimum_falls_back_to_the_best_speed_found() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        algorithm: Algorithm::Conventional,
        ..reduced_cfg(&dir.path().join("conventional"), 20_000, 5000, 3)
    };
    run_experiment(&cfg, 1).unwrap();
    // Pretend the exact optimum is unavailable.
    let oracle = cfg.output.join("oracle.txt");
    let text = fs::read_to_string(&oracle).unwrap();
    let text: String = text
        .lines()
        .map(|l| {
            if l.starts_with("optimal_speed") {
                "optimal_speed = 0".into()
            } else {
                l.to_string()
            }
        })
        .map(|l| l + "\n")
        .collect();
    fs::write(&oracle, text).unwrap();

    let best = (3..6)
        .flat_map(|k| read_csv(&cfg.output.join(format!("seeds/seed_{k}.csv"))).1)
        .map(|r| num(&r[1]))
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(best > 0.0);
    emit_figure_data(&load_runs(dir.path()).unwrap(), &dir.path().join("figs")).unwrap();
    let (_, rows) = read_csv(&dir.path().join("figs/fig9.csv"));
    assert!(rows.iter().all(|r| r[4] == "best_found"));
    let top = rows
        .iter()
        .map(|r| num(&r[2]))
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(top <= 100.0 + 1e-9);
}

#[test]
fn figure_data_needs_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let runs = load_runs(dir.path()).unwrap();
    assert!(runs.is_empty());
    let err = emit_figure_data(&runs, &dir.path().join("figs")).unwrap_err();
    assert!(matches!(err, Error::MissingRun(_)));
}

#[test]
fn single_seed_reports_zero_spread_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reduced_cfg(&dir.path().join("one"), 3000, 1000, 1);
    run_experiment(&cfg, 1).unwrap();
    let (_, summary) = read_csv(&cfg.output.join("summary.csv"));
    for row in &summary {
        for col in [2, 4, 6, 8] {
            assert_eq!(num(&row[col]), 0.0);
        }
    }
}

#[test]
#[ignore = "not observed: after 30000 steps the mean time-hopping q-curve starts below the \
            conventional one on both crawler sizes; see the decisions notes"]
fn time_hopping_q_curve_has_the_steeper_head() {
    let base = ExperimentConfig {
        environment: EnvironmentSpec::Crawler(CrawlerConfig::default()),
        algorithm: Algorithm::Conventional,
        learner: LearnerConfig::default(),
        total_steps: 30_000,
        checkpoints: CheckpointSpec::List(vec![30_000]),
        n_seeds: 10,
        base_seed: 0,
        output: "unused".into(),
    };
    let conventional = execute(&base, 1).unwrap();
    let hopping = execute(
        &ExperimentConfig {
            algorithm: Algorithm::TimeHopping(HopperSpec::default()),
            ..base
        },
        1,
    )
    .unwrap();
    let head = conventional
        .q_curve
        .iter()
        .zip(&hopping.q_curve)
        .take_while(|(c, h)| h.mean >= c.mean)
        .count();
    assert!(head >= 1);
}
