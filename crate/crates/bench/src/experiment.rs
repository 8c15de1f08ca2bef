//! Seeded experiment runs with CSV and JSON output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, RunMode};
use crate::scenario::randomize_scenario;
use crate::trial::{run_trial, TrialRecord, TrialStatus};
use crate::BenchError;

/// Min, mean and max over the successful trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Aggregate {
    fn of(values: impl Iterator<Item = f64>) -> Option<Self> {
        let v: Vec<f64> = values.collect();
        if v.is_empty() {
            return None;
        }
        Some(Self {
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Summary written next to the per-trial CSV.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub version: &'static str,
    pub config: ExperimentConfig,
    /// Settings the model leaves open and this run fills with a default.
    pub defaulted: Vec<&'static str>,
    pub trials: usize,
    pub ok: usize,
    pub infeasible: usize,
    pub failed: usize,
    pub violations: usize,
    /// Aggregates exclude infeasible and failed trials.
    pub n_optimize: Option<Aggregate>,
    pub n_sdr_rank: Option<Aggregate>,
    pub objective: Option<Aggregate>,
    pub max_residual: Option<Aggregate>,
    /// Trials per value of `n_optimize`.
    pub histogram: BTreeMap<usize, usize>,
    /// Smallest and largest bound over the trials (equal for a fixed setup).
    pub bound_range: Option<(usize, usize)>,
    /// `n_optimize ≤ bound` in every evaluated trial.
    pub within_bound: bool,
    /// Failure and violation messages, by trial.
    pub problems: Vec<(u64, String)>,
}

/// Records of a run plus their summary.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<TrialRecord>,
    pub summary: ExperimentSummary,
}

impl ExperimentResult {
    /// Whether any trial broke an invariant.
    pub fn has_violation(&self) -> bool {
        self.summary.violations > 0 || !self.summary.within_bound
    }
}

/// Runs trials `0..n_seeds` in parallel and aggregates them in index order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, BenchError> {
    cfg.validate()?;
    let records = (0..cfg.run.n_seeds as u64)
        .into_par_iter()
        .map(|i| randomize_scenario(cfg, i).map(|rs| run_trial(&rs, cfg)))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(cfg, &records);
    Ok(ExperimentResult { records, summary })
}

fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord]) -> ExperimentSummary {
    let evaluated: Vec<&TrialRecord> = records
        .iter()
        .filter(|r| matches!(r.status, TrialStatus::Ok | TrialStatus::Violation(_)))
        .collect();
    let count = |f: fn(&TrialStatus) -> bool| records.iter().filter(|r| f(&r.status)).count();
    let mut histogram = BTreeMap::new();
    for r in &evaluated {
        *histogram.entry(r.n_optimize).or_insert(0) += 1;
    }
    let bounds = evaluated.iter().map(|r| r.bound);
    let bound_range = bounds.clone().min().zip(bounds.max());
    let problems = records
        .iter()
        .filter_map(|r| match &r.status {
            TrialStatus::Failed(m) | TrialStatus::Violation(m) => Some((r.seed, m.clone())),
            _ => None,
        })
        .collect();
    let mut defaulted = vec!["prior ranges |mean| ~ U[0.5, 1.5], variance ~ U[0.1, 1]"];
    if cfg.scenario.mode != RunMode::SensingOnly {
        defaulted.push("power budget of ISAC runs");
    }
    ExperimentSummary {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        defaulted,
        trials: records.len(),
        ok: count(|s| *s == TrialStatus::Ok),
        infeasible: count(|s| *s == TrialStatus::Infeasible),
        failed: count(|s| matches!(s, TrialStatus::Failed(_))),
        violations: count(|s| matches!(s, TrialStatus::Violation(_))),
        n_optimize: Aggregate::of(evaluated.iter().map(|r| r.n_optimize as f64)),
        n_sdr_rank: Aggregate::of(evaluated.iter().map(|r| r.n_sdr_rank as f64)),
        objective: Aggregate::of(evaluated.iter().map(|r| r.objective)),
        max_residual: Aggregate::of(evaluated.iter().map(|r| r.max_residual)),
        histogram,
        bound_range,
        within_bound: evaluated.iter().all(|r| r.n_optimize <= r.bound),
        problems,
    }
}

/// Per-trial CSV, one row per trial in index order.
pub fn write_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `trials.csv` and `summary.json` into `dir`; returns both paths.
pub fn write_outputs(
    result: &ExperimentResult,
    dir: &Path,
) -> Result<(PathBuf, PathBuf), BenchError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_path = dir.join("trials.csv");
    let file = File::create(&csv_path).map_err(io_err(&csv_path))?;
    write_csv(&result.records, file).map_err(|e| BenchError::Io {
        path: csv_path.clone(),
        source: std::io::Error::other(e.to_string()),
    })?;
    let json_path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&result.summary).expect("summary serializes");
    std::fs::write(&json_path, text + "\n").map_err(io_err(&json_path))?;
    Ok((csv_path, json_path))
}
