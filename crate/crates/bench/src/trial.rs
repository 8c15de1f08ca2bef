//! One Monte-Carlo trial: sensing design, optional power minimization,
//! rank-one extraction and reduction to the bound, with every constraint
//! re-checked from the final beamformers.

use std::time::Instant;

use isac_core::bounds::{bound_for_d, BoundMode, BoundOptions};
use isac_core::channel::{
    assemble_bfim, InterferenceMode, IsacScenario, Scalarization, SensingMetric,
};
use isac_core::metrics::{bcrb_scalarize, sinr, BcrbMode, BeamformerMatrix};
use isac_core::reduce::{reduce_to_bound, ReduceOptions, ReductionTarget};
use isac_core::sdp::{
    build_power_min_ic, build_power_min_nic, build_sensing_design, extract_rank_one, solve,
    BuiltProblem, PowerMinTargets, SdpSolution, SolveStatus, SolverOptions,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, MetricChoice, ObjectiveChoice, RunMode};
use crate::scenario::RandomScenario;

/// End-to-end relative residual above which a trial violates an invariant.
pub const RESIDUAL_LIMIT: f64 = 1e-5;

/// Relative drift allowed between a power-minimization optimum and the
/// beamformers extracted from it.
pub const EXTRACTION_LIMIT: f64 = 1e-6;

/// Eigenvalue threshold when factoring a covariance that is reduced next.
/// Far below the counting threshold, so no meaningful power is dropped, and
/// above the solver noise, which would otherwise appear as extra sensing
/// beams that leak into the channels.
const FACTOR_THRESHOLD: f64 = 1e-8;

/// How a trial ended.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    /// The design problem has no feasible point; the trial is skipped.
    Infeasible,
    /// A numerical stage failed.
    Failed(String),
    /// An invariant was broken.
    Violation(String),
}

impl TrialStatus {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::Infeasible => "infeasible",
            Self::Failed(_) => "failed",
            Self::Violation(_) => "violation",
        }
    }
}

/// Everything measured in one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub n_tx: usize,
    pub n_rx: usize,
    pub k: usize,
    pub n_targets: usize,
    pub d: usize,
    pub mode: RunMode,
    /// Beamformers read off the relaxation (counted at the rank threshold).
    pub n_sdr_rank: usize,
    /// Beamformers after the reduction.
    pub n_optimize: usize,
    pub bound: usize,
    /// Sensing objective of the final beamformers.
    pub objective: f64,
    /// Optimal value of the relaxation.
    pub design_objective: f64,
    pub power: f64,
    /// `max_i |c_i' − c_i| / max(|c_i|, 1e-9·max_j |c_j|)` over the reduction.
    pub quad_residual: f64,
    /// `max_k (γ_k − SINR_k)⁺ / γ_k` at the final beamformers.
    pub sinr_deficit: f64,
    /// `|P' − P| / P` over the reduction.
    pub power_drift: f64,
    /// `(P' − P_budget)⁺ / P_budget`.
    pub budget_excess: f64,
    /// Objective drift of the rank-one extraction of the power minimization.
    pub extraction_drift: Option<f64>,
    /// Largest gated residual.
    pub max_residual: f64,
    pub solver_iterations: usize,
    pub reduction_steps: usize,
    /// The power minimization did not converge and the design point was
    /// reduced instead.
    pub power_min_fallback: bool,
    /// Whether leaking sensing beams were re-orthogonalized first.
    pub orthogonalized: bool,
    pub status: TrialStatus,
    pub wall_time_ms: f64,
}

/// One CSV row, columns in output order.
#[derive(Debug, Clone, Serialize)]
pub struct CsvRow<'a> {
    pub seed: u64,
    pub n_tx: usize,
    pub n_rx: usize,
    pub k: usize,
    pub ntr: usize,
    pub d: usize,
    pub mode: &'a str,
    pub n_sdr_rank: usize,
    pub n_optimize: usize,
    pub bound: usize,
    pub objective: f64,
    pub power: f64,
    pub max_residual: f64,
    pub status: &'a str,
    pub wall_time_ms: f64,
}

impl TrialRecord {
    pub fn csv_row(&self) -> CsvRow<'_> {
        CsvRow {
            seed: self.seed,
            n_tx: self.n_tx,
            n_rx: self.n_rx,
            k: self.k,
            ntr: self.n_targets,
            d: self.d,
            mode: self.mode.label(),
            n_sdr_rank: self.n_sdr_rank,
            n_optimize: self.n_optimize,
            bound: self.bound,
            objective: self.objective,
            power: self.power,
            max_residual: self.max_residual,
            status: self.status.label(),
            wall_time_ms: self.wall_time_ms,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == TrialStatus::Ok
    }
}

/// Scalarization the configuration asks for.
pub fn scalarization(cfg: &ExperimentConfig) -> Scalarization {
    match (cfg.scenario.metric, cfg.scenario.objective) {
        (MetricChoice::Snr, _) => Scalarization::WeightedSum(vec![1.0]),
        (_, ObjectiveChoice::MaxDiag) => Scalarization::MaxDiag,
        (_, ObjectiveChoice::Trace) => Scalarization::Trace,
    }
}

/// Bound that applies to the run mode.
pub fn applicable_bound(mode: RunMode, k: usize, d: usize) -> usize {
    let mode = match mode {
        RunMode::Ic => BoundMode::Ic,
        RunMode::Nic => BoundMode::Nic,
        RunMode::SensingOnly => BoundMode::Radar,
    };
    bound_for_d(k, d, mode, BoundOptions::default())
}

/// Sensing objective of `v` under the scalarization.
pub fn sensing_objective(
    scenario: &IsacScenario,
    scal: &Scalarization,
    v: &BeamformerMatrix,
) -> f64 {
    let bcrb = match scal {
        Scalarization::Trace => BcrbMode::Trace,
        Scalarization::MaxDiag => BcrbMode::MaxDiag,
        Scalarization::WeightedSum(w) => {
            let values = scenario.metric.quad_spec().values_of_gram(&v.gram());
            return w.iter().zip(values).map(|(a, b)| a * b).sum();
        }
        _ => return f64::NAN,
    };
    match &scenario.metric {
        SensingMetric::Bfim { bfim, .. } => assemble_bfim(bfim, v.columns())
            .ok()
            .and_then(|j| bcrb_scalarize(&j, bcrb).ok())
            .unwrap_or(f64::NAN),
        SensingMetric::AoaOnly(spec) => {
            let inv = spec.information(&v.gram()).into_iter().map(|x| 1.0 / x);
            match bcrb {
                BcrbMode::MaxDiag => inv.fold(f64::NEG_INFINITY, f64::max),
                _ => inv.sum(),
            }
        }
        SensingMetric::Quadratic(_) => f64::NAN,
    }
}

fn relative_quad_residual(before: &[f64], after: &[f64]) -> f64 {
    let scale = before.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    before
        .iter()
        .zip(after)
        .map(|(a, b)| (a - b).abs() / a.abs().max(1e-9 * scale).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

fn sinr_deficit(scenario: &IsacScenario, v: &BeamformerMatrix) -> f64 {
    sinr(scenario, v)
        .iter()
        .zip(&scenario.sinr_targets)
        .map(|(s, g)| ((g - s) / g).max(0.0))
        .fold(0.0, f64::max)
}

struct Stage {
    built: BuiltProblem,
    sol: SdpSolution,
}

fn solve_stage(built: BuiltProblem, opts: &SolverOptions) -> Result<Stage, String> {
    let sol = solve(&built.problem, opts).map_err(|e| e.to_string())?;
    Ok(Stage { built, sol })
}

/// Checks a rank-one extraction against the optimum it came from: SINR
/// constraints hold and the power equals the optimal value.
pub fn extraction_drift(scenario: &IsacScenario, v: &BeamformerMatrix, optimal_power: f64) -> f64 {
    let power = (v.power() - optimal_power).abs() / optimal_power;
    power.max(sinr_deficit(scenario, v))
}

/// Runs the full pipeline on one drawn scenario. Errors never escape: they
/// are recorded in the status.
pub fn run_trial(rs: &RandomScenario, cfg: &ExperimentConfig) -> TrialRecord {
    let start = Instant::now();
    let sc = &rs.scenario;
    let d = sc.metric.d();
    let k = sc.k();
    let mut rec = TrialRecord {
        seed: rs.index,
        n_tx: sc.geometry.n_tx,
        n_rx: sc.geometry.n_rx,
        k,
        n_targets: rs.priors.len(),
        d,
        mode: cfg.scenario.mode,
        n_sdr_rank: 0,
        n_optimize: 0,
        bound: applicable_bound(cfg.scenario.mode, k, d),
        objective: f64::NAN,
        design_objective: f64::NAN,
        power: f64::NAN,
        quad_residual: 0.0,
        sinr_deficit: 0.0,
        power_drift: 0.0,
        budget_excess: 0.0,
        extraction_drift: None,
        max_residual: 0.0,
        solver_iterations: 0,
        reduction_steps: 0,
        power_min_fallback: false,
        orthogonalized: false,
        status: TrialStatus::Ok,
        wall_time_ms: 0.0,
    };
    rec.status = match pipeline(rs, cfg, &mut rec) {
        Ok(status) => status,
        Err(msg) => TrialStatus::Failed(msg),
    };
    if cfg.output.record_wall_time {
        rec.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    }
    rec
}

fn pipeline(
    rs: &RandomScenario,
    cfg: &ExperimentConfig,
    rec: &mut TrialRecord,
) -> Result<TrialStatus, String> {
    let sc = &rs.scenario;
    let scal = scalarization(cfg);
    let design = build_sensing_design(&sc.metric, sc, &scal).map_err(|e| e.to_string())?;
    let design = solve_stage(design, &SolverOptions::default())?;
    rec.solver_iterations = design.sol.iterations;
    match design.sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Ok(TrialStatus::Infeasible),
        SolveStatus::MaxIter => return Err("design solve hit the iteration limit".into()),
    }
    rec.design_objective = design.sol.objective;
    let (rk, r) = design.built.layout.covariances(&design.sol);
    let counted = extract_rank_one(&r, &rk, &sc.channels, cfg.run.rank_threshold)
        .map_err(|e| e.to_string())?;
    rec.n_sdr_rank = counted.n_beams();

    let v0 = if cfg.run.power_min_stage {
        let targets = PowerMinTargets::Quads(sc.metric.quad_spec().values_of_gram(&r));
        let built = match sc.interference_mode {
            InterferenceMode::Ic => build_power_min_ic(sc, &targets),
            InterferenceMode::Nic => build_power_min_nic(sc, &targets),
        }
        .map_err(|e| e.to_string())?;
        let pm = solve_stage(built, &SolverOptions::precise())?;
        rec.solver_iterations += pm.sol.iterations;
        if pm.sol.status != SolveStatus::Optimal {
            // The design point is still feasible; steps that would change
            // its power are rejected by the reduction.
            rec.power_min_fallback = true;
            extract_rank_one(&r, &rk, &sc.channels, FACTOR_THRESHOLD).map_err(|e| e.to_string())?
        } else {
            let (rk, r) = pm.built.layout.covariances(&pm.sol);
            let v = extract_rank_one(&r, &rk, &sc.channels, FACTOR_THRESHOLD)
                .map_err(|e| e.to_string())?;
            rec.extraction_drift = Some(extraction_drift(sc, &v, pm.sol.objective));
            v
        }
    } else {
        extract_rank_one(&r, &rk, &sc.channels, FACTOR_THRESHOLD).map_err(|e| e.to_string())?
    };

    let target = ReductionTarget::from_beamformers(&v0, sc);
    let opts = ReduceOptions {
        check_power: cfg.run.power_min_stage,
        ..ReduceOptions::default()
    };
    let (v, trace) = reduce_to_bound(&v0, sc, &target, &opts, &SolverOptions::precise())
        .map_err(|e| e.to_string())?;
    rec.reduction_steps = trace.steps.len();
    rec.orthogonalized = trace.orthogonalized;
    rec.n_optimize = v.n_beams();
    rec.power = v.power();
    rec.objective = sensing_objective(sc, &scal, &v);

    let after = sc.metric.quad_spec().values_of_gram(&v.gram());
    rec.quad_residual = relative_quad_residual(&target.quad_values, &after);
    rec.sinr_deficit = sinr_deficit(sc, &v);
    rec.power_drift = (rec.power - v0.power()).abs() / v0.power();
    rec.budget_excess = ((rec.power - sc.power_budget) / sc.power_budget).max(0.0);
    let mut gated = [rec.quad_residual, rec.sinr_deficit, rec.budget_excess]
        .into_iter()
        .fold(0.0, f64::max);
    if cfg.run.power_min_stage {
        gated = gated.max(rec.power_drift);
    }
    rec.max_residual = gated;

    let mut problems = Vec::new();
    if rec.n_optimize > rec.bound {
        problems.push(format!(
            "{} beamformers exceed the bound {}",
            rec.n_optimize, rec.bound
        ));
    }
    if rec.n_optimize > rec.n_tx && cfg.scenario.mode == RunMode::Nic {
        problems.push(format!("{} beamformers exceed n_tx", rec.n_optimize));
    }
    if !(gated <= RESIDUAL_LIMIT) {
        problems.push(format!("residual {gated:.3e}"));
    }
    if let Some(drift) = rec.extraction_drift {
        if !(drift <= EXTRACTION_LIMIT) {
            problems.push(format!("extraction drift {drift:.3e}"));
        }
    }
    Ok(if problems.is_empty() {
        TrialStatus::Ok
    } else {
        TrialStatus::Violation(problems.join("; "))
    })
}
