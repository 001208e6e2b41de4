//! Figure data assembled from experiment output trees.
//!
//! | file        | columns                                     | runs used |
//! |-------------|---------------------------------------------|-----------|
//! | `fig9.csv`  | `step,algorithm,mean_pct,stddev,reference`  | `conventional`, `gamma-lasso` (as `time_hopping`) |
//! | `fig10.csv` | `rank,algorithm,q_best`                     | same as fig9 |
//! | `fig11.csv` | `step,trigger,activations`                  | `gamma-lasso` (`gamma`), `fixed-lasso` (`fixed`) |
//! | `fig12.csv` | `step,selector,max_q`                       | `gamma-lasso` (`lasso`), `gamma-random` (`random`) |
//!
//! Values are means over seeds; `stddev` is the population deviation.
//! `reference` says what the percentages are relative to: `optimal` when
//! every fig9 run has a positive exact optimum, otherwise `best_found`, the
//! fastest checkpoint speed of any seed of any loaded run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::experiment::{write_rows, Stat, REFERENCE_OPTIMAL};

pub const REFERENCE_BEST_FOUND: &str = "best_found";

/// One experiment output tree read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRun {
    pub label: String,
    pub dir: PathBuf,
    pub optimal_speed: f64,
    /// `(step, max_q_mean, activations_mean)` per checkpoint.
    pub summary: Vec<(u64, f64, f64)>,
    /// Per seed, `(step, speed)` per checkpoint.
    pub seed_speeds: Vec<Vec<(u64, f64)>>,
    pub q_curve: Vec<f64>,
}

fn read_csv(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e))?;
    r.records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::io(path, e))
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec.get(i)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::io(path, format!("bad value in column {} of {:?}", i + 1, rec)))
}

fn read_kv(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}

impl LoadedRun {
    /// Reads the tree written by
    /// [`write_report`](crate::harness::write_report).
    pub fn load(dir: &Path) -> Result<Self> {
        let oracle_path = dir.join("oracle.txt");
        let oracle = read_kv(&oracle_path)?;
        let get = |k: &str| {
            oracle
                .get(k)
                .cloned()
                .ok_or_else(|| Error::io(&oracle_path, format!("missing `{k}`")))
        };
        let label = get("label")?;
        let optimal_speed = get("optimal_speed")?
            .parse()
            .map_err(|e| Error::io(&oracle_path, e))?;
        let n_seeds: usize = get("n_seeds")?
            .parse()
            .map_err(|e| Error::io(&oracle_path, e))?;

        let summary_path = dir.join("summary.csv");
        let summary = read_csv(&summary_path)?
            .iter()
            .map(|r| {
                Ok((
                    field(&summary_path, r, 0)?,
                    field(&summary_path, r, 5)?,
                    field(&summary_path, r, 7)?,
                ))
            })
            .collect::<Result<_>>()?;

        let mut seed_files: Vec<(u64, PathBuf)> = Vec::new();
        let seeds_dir = dir.join("seeds");
        for entry in fs::read_dir(&seeds_dir).map_err(|e| Error::io(&seeds_dir, e))? {
            let path = entry.map_err(|e| Error::io(&seeds_dir, e))?.path();
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default();
            if let Some(seed) = name
                .strip_prefix("seed_")
                .and_then(|s| s.strip_suffix(".csv"))
                .and_then(|s| s.parse().ok())
            {
                seed_files.push((seed, path));
            }
        }
        seed_files.sort();
        if seed_files.len() != n_seeds {
            return Err(Error::io(
                &seeds_dir,
                format!("expected {n_seeds} seed files, found {}", seed_files.len()),
            ));
        }
        let seed_speeds = seed_files
            .iter()
            .map(|(_, p)| {
                read_csv(p)?
                    .iter()
                    .map(|r| Ok((field(p, r, 0)?, field(p, r, 1)?)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;

        let qcurve_path = dir.join("qcurve.csv");
        let q_curve = read_csv(&qcurve_path)?
            .iter()
            .map(|r| field(&qcurve_path, r, 1))
            .collect::<Result<_>>()?;

        Ok(LoadedRun {
            label,
            dir: dir.to_path_buf(),
            optimal_speed,
            summary,
            seed_speeds,
            q_curve,
        })
    }
}

/// Loads `dir` itself when it is a run, otherwise every run directly
/// below it, in name order.
pub fn load_runs(dir: &Path) -> Result<Vec<LoadedRun>> {
    if dir.join("summary.csv").is_file() {
        return Ok(vec![LoadedRun::load(dir)?]);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("summary.csv").is_file())
        .collect();
    subdirs.sort();
    subdirs.iter().map(|p| LoadedRun::load(p)).collect()
}

/// Figures written and figures skipped for lack of runs.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureOutput {
    pub written: Vec<PathBuf>,
    pub skipped: Vec<(String, String)>,
}

fn find<'a>(runs: &'a [LoadedRun], label: &str) -> Option<&'a LoadedRun> {
    runs.iter().find(|r| r.label == label)
}

fn roles<'a>(runs: &'a [LoadedRun], pairs: &[(&str, &'a str)]) -> Vec<(&'a str, &'a LoadedRun)> {
    pairs
        .iter()
        .filter_map(|&(label, name)| find(runs, label).map(|r| (name, r)))
        .collect()
}

/// Writes fig9–fig12 into `out` for every figure that has at least one of
/// its runs among `runs`. Fails with [`Error::MissingRun`] if none does.
pub fn emit_figure_data(runs: &[LoadedRun], out: &Path) -> Result<FigureOutput> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut result = FigureOutput {
        written: Vec::new(),
        skipped: Vec::new(),
    };
    let mut skip = |fig: &str, needs: &str| {
        result
            .skipped
            .push((fig.to_string(), format!("needs a {needs} run")));
    };

    let algorithms = roles(
        runs,
        &[
            ("conventional", "conventional"),
            ("gamma-lasso", "time_hopping"),
        ],
    );
    let mut written = Vec::new();
    if algorithms.is_empty() {
        skip("fig9", "conventional or gamma-lasso");
        skip("fig10", "conventional or gamma-lasso");
    } else {
        let exact = algorithms.iter().all(|(_, r)| r.optimal_speed > 0.0);
        let best_found = runs
            .iter()
            .flat_map(|r| r.seed_speeds.iter().flatten().map(|&(_, s)| s))
            .fold(f64::NEG_INFINITY, f64::max);
        let (reference, denominator) = if exact {
            (REFERENCE_OPTIMAL, None)
        } else if best_found > 0.0 {
            (REFERENCE_BEST_FOUND, Some(best_found))
        } else {
            ("none", None)
        };
        let mut rows = Vec::new();
        for (name, run) in &algorithms {
            let denom = denominator.unwrap_or(run.optimal_speed);
            for (i, &(step, _, _)) in run.summary.iter().enumerate() {
                let stat = (denom > 0.0).then(|| {
                    let pct: Vec<f64> = run
                        .seed_speeds
                        .iter()
                        .map(|s| 100.0 * s[i].1 / denom)
                        .collect();
                    Stat::of(&pct)
                });
                rows.push(vec![
                    step.to_string(),
                    name.to_string(),
                    stat.map(|s| s.mean.to_string()).unwrap_or_default(),
                    stat.map(|s| s.std.to_string()).unwrap_or_default(),
                    reference.to_string(),
                ]);
            }
        }
        let path = out.join("fig9.csv");
        write_rows(
            &path,
            &["step", "algorithm", "mean_pct", "stddev", "reference"],
            rows,
        )?;
        written.push(path);

        let path = out.join("fig10.csv");
        write_rows(
            &path,
            &["rank", "algorithm", "q_best"],
            algorithms.iter().flat_map(|(name, run)| {
                run.q_curve
                    .iter()
                    .enumerate()
                    .map(move |(k, q)| vec![(k + 1).to_string(), name.to_string(), q.to_string()])
            }),
        )?;
        written.push(path);
    }

    let series = |fig: &str,
                  column: &str,
                  pairs: &[(&str, &'static str)],
                  value: fn(&(u64, f64, f64)) -> f64|
     -> Result<Option<PathBuf>> {
        let present = roles(runs, pairs);
        if present.is_empty() {
            return Ok(None);
        }
        let path = out.join(format!("{fig}.csv"));
        let value_name = if fig == "fig11" {
            "activations"
        } else {
            "max_q"
        };
        write_rows(
            &path,
            &["step", column, value_name],
            present.iter().flat_map(|(name, run)| {
                run.summary.iter().map(move |row| {
                    vec![row.0.to_string(), name.to_string(), value(row).to_string()]
                })
            }),
        )?;
        Ok(Some(path))
    };
    match series(
        "fig11",
        "trigger",
        &[("gamma-lasso", "gamma"), ("fixed-lasso", "fixed")],
        |r| r.2,
    )? {
        Some(p) => written.push(p),
        None => skip("fig11", "gamma-lasso or fixed-lasso"),
    }
    match series(
        "fig12",
        "selector",
        &[("gamma-lasso", "lasso"), ("gamma-random", "random")],
        |r| r.1,
    )? {
        Some(p) => written.push(p),
        None => skip("fig12", "gamma-lasso or gamma-random"),
    }

    if written.is_empty() {
        return Err(Error::MissingRun(format!(
            "no usable runs among {} loaded",
            runs.len()
        )));
    }
    result.written = written;
    Ok(result)
}
