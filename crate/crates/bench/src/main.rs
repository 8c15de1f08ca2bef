//! Command-line driver: bound queries, single solves and reductions,
//! seeded experiments and the analytic verification suite.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 invariant
//! violation or failed check, 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use isac_bench::config::{ExperimentConfig, RunMode};
use isac_bench::experiment::{run_experiment, write_outputs};
use isac_bench::scenario::randomize_scenario;
use isac_bench::trial::{run_trial, scalarization, TrialStatus};
use isac_bench::verify::verify_analytic;
use isac_bench::BenchError;
use isac_core::bounds::{bfim_d, bound_for_d, BoundMode, BoundOptions, MetricKind};
use isac_core::channel::multitarget_d;
use isac_core::sdp::{build_sensing_design, extract_rank_one, solve, SolverOptions};

#[derive(Parser)]
#[command(
    name = "isac",
    version,
    about = "Minimum number of beamformers for ISAC downlinks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Ic,
    Nic,
    Radar,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReduceModeArg {
    Ic,
    Nic,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Snr,
    Fullchannel,
    Aoa,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a bound on the number of beamformers.
    #[command(group(ArgGroup::new("size").required(true).args(["l", "d", "ntr", "metric"])))]
    Bounds {
        /// Number of users.
        #[arg(long)]
        k: usize,
        /// Number of real sensing parameters.
        #[arg(long)]
        l: Option<usize>,
        /// Number of quadratic terms.
        #[arg(long)]
        d: Option<usize>,
        /// Number of line-of-sight targets.
        #[arg(long)]
        ntr: Option<usize>,
        /// Named metric.
        #[arg(long, value_enum)]
        metric: Option<MetricArg>,
        /// Transmit antennas (full-channel metric, NIC cap).
        #[arg(long)]
        n_tx: Option<usize>,
        /// Targets of the AoA-only metric.
        #[arg(long, default_value_t = 1)]
        targets: usize,
        #[arg(long, value_enum)]
        mode: ModeArg,
    },
    /// Solve the sensing design of one drawn scenario.
    Solve {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run design, extraction and reduction on one drawn scenario.
    Reduce {
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: ReduceModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a seeded experiment and write CSV and JSON results.
    Experiment {
        config: PathBuf,
        /// Override the number of seeds.
        #[arg(long)]
        seeds: Option<usize>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run once per value and report the mean counts side by side.
        #[arg(long = "theta-max")]
        theta_max: Vec<f64>,
    },
    /// Run the analytic verification suite.
    Verify,
}

/// Outcome that maps to a nonzero exit code without being an error.
struct Violation;

/// `println!` that reports write failures, so a closed pipe ends the
/// program quietly instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        writeln!(std::io::stdout(), $($arg)*)?;
    }};
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Violation)) => ExitCode::from(2),
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let io = e.chain().any(|c| {
                c.is::<std::io::Error>() || matches!(c.downcast_ref(), Some(BenchError::Io { .. }))
            });
            ExitCode::from(if io { 3 } else { 1 })
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn run(cli: Cli) -> Result<Option<Violation>> {
    match cli.command {
        Command::Bounds {
            k,
            l,
            d,
            ntr,
            metric,
            n_tx,
            targets,
            mode,
        } => {
            let d = match (l, d, ntr, metric) {
                (Some(l), ..) => bfim_d(l),
                (_, Some(d), ..) => d,
                (_, _, Some(n), _) => multitarget_d(n),
                (.., Some(MetricArg::Snr)) => MetricKind::SnrScnr.d(),
                (.., Some(MetricArg::Aoa)) => {
                    MetricKind::AoaOnlyZeroMean { n_targets: targets }.d()
                }
                (.., Some(MetricArg::Fullchannel)) => {
                    let n_tx = n_tx.context("--metric fullchannel needs --n-tx")?;
                    MetricKind::FullChannel { n_tx }.d()
                }
                _ => unreachable!("clap requires one sizing argument"),
            };
            anyhow::ensure!(d >= 1, "the metric needs at least one quadratic term");
            let (mode, label) = match mode {
                ModeArg::Ic => (BoundMode::Ic, "ic"),
                ModeArg::Nic => (BoundMode::Nic, "nic"),
                ModeArg::Radar => (BoundMode::Radar, "radar"),
            };
            let opts = BoundOptions {
                n_tx,
                ..BoundOptions::default()
            };
            let b = bound_for_d(k, d, mode, opts);
            out!("k={k} d={d} mode={label} bound={b}");
            Ok(None)
        }
        Command::Solve { config, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rs = randomize_scenario(&cfg, seed)?;
            let sc = &rs.scenario;
            let built = build_sensing_design(&sc.metric, sc, &scalarization(&cfg))?;
            let sol = solve(&built.problem, &SolverOptions::default())?;
            let beams = if sol.is_optimal() {
                let (rk, r) = built.layout.covariances(&sol);
                Some(extract_rank_one(&r, &rk, &sc.channels, cfg.run.rank_threshold)?.n_beams())
            } else {
                None
            };
            let out = serde_json::json!({
                "seed": seed,
                "status": format!("{:?}", sol.status),
                "objective": sol.objective,
                "n_sdr_rank": beams,
                "iterations": sol.iterations,
                "primal_residual": sol.primal_residual,
                "dual_residual": sol.dual_residual,
                "gap": sol.gap,
            });
            out!("{}", serde_json::to_string_pretty(&out)?);
            Ok(None)
        }
        Command::Reduce { config, mode, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            // Without users both modes coincide; sensing-only runs stay as they are.
            if cfg.scenario.mode != RunMode::SensingOnly {
                cfg.scenario.mode = match mode {
                    ReduceModeArg::Ic => RunMode::Ic,
                    ReduceModeArg::Nic => RunMode::Nic,
                };
            }
            cfg.validate()?;
            let rs = randomize_scenario(&cfg, seed)?;
            let rec = run_trial(&rs, &cfg);
            out!("{}", serde_json::to_string_pretty(&rec)?);
            Ok(matches!(rec.status, TrialStatus::Violation(_)).then_some(Violation))
        }
        Command::Experiment {
            config,
            seeds,
            out,
            theta_max,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(n) = seeds {
                cfg.run.n_seeds = n;
            }
            if let Some(dir) = out {
                cfg.output.dir = dir;
            }
            let runs: Vec<Option<f64>> = if theta_max.is_empty() {
                vec![None]
            } else {
                theta_max.into_iter().map(Some).collect()
            };
            let mut violated = false;
            let mut rows = Vec::new();
            for t in runs {
                let mut c = cfg.clone();
                if let Some(t) = t {
                    c.scenario.theta_max_deg = t;
                    c.output.dir = cfg.output.dir.join(format!("theta_max_{t}"));
                }
                let result = run_experiment(&c)?;
                let (csv, json) = write_outputs(&result, &c.output.dir)?;
                let s = &result.summary;
                let mean = s.n_optimize.map(|a| a.mean).unwrap_or(f64::NAN);
                let max = s.n_optimize.map(|a| a.max).unwrap_or(f64::NAN);
                out!(
                    "{} trials ({} ok, {} infeasible, {} failed, {} violations); n_optimize mean {mean:.3} max {max}; bound {:?}",
                    s.trials, s.ok, s.infeasible, s.failed, s.violations, s.bound_range
                );
                out!("wrote {} and {}", csv.display(), json.display());
                rows.push((c.scenario.theta_max_deg, mean));
                violated |= result.has_violation();
            }
            if rows.len() > 1 {
                out!("theta_max_deg,mean_n_optimize");
                for (t, m) in rows {
                    out!("{t},{m:.4}");
                }
            }
            Ok(violated.then_some(Violation))
        }
        Command::Verify => {
            let report = verify_analytic();
            for c in &report.checks {
                out!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            Ok((!report.passed()).then_some(Violation))
        }
    }
}
