//! WebAssembly bindings for the browser demo.
//!
//! Every operation is a plain Rust function returning a serializable
//! result, so it can be tested natively; the `wasm_bindgen` wrappers only
//! convert the result to JSON.

use isac_core::bounds::{bound_for_d, multitarget_bound_table, BoundMode, BoundOptions};
use isac_core::channel::{
    build_multitarget_bfim, steering_vector, ArrayGeometry, InterferenceMode, IsacScenario,
    Scalarization, SensingMetric, Side, TargetPrior,
};
use isac_core::numerics::{Complex, ComplexMatrix};
use isac_core::reduce::{
    guaranteed_bound, reduce_to_bound, two_beam_objective, verify_single_target_two_beams,
    ReduceOptions, ReductionTarget,
};
use isac_core::sdp::{build_sensing_design, extract_rank_one, solve, SolverOptions};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Eigenvalue threshold used when factoring the optimal covariances.
const FACTOR_THRESHOLD: f64 = 1e-8;

/// Number of angles in a plotted beam pattern.
const PATTERN_POINTS: usize = 361;

/// Number of samples on a plotted power-split curve.
const CURVE_POINTS: usize = 200;

/// Parses `ic`, `nic` or `radar`.
pub fn parse_mode(mode: &str) -> Result<BoundMode, String> {
    match mode {
        "ic" => Ok(BoundMode::Ic),
        "nic" => Ok(BoundMode::Nic),
        "radar" => Ok(BoundMode::Radar),
        other => Err(format!("unknown mode {other:?}")),
    }
}

/// Bound on the beam count for `K` users and a metric with `d` terms.
pub fn bound_value(k: usize, d: usize, mode: &str) -> Result<usize, String> {
    if d == 0 {
        return Err("d must be at least 1".into());
    }
    Ok(bound_for_d(
        k,
        d,
        parse_mode(mode)?,
        BoundOptions::default(),
    ))
}

/// Result of the two-beam explorer.
#[derive(Debug, Clone, Serialize)]
pub struct TwoBeamView {
    pub beta1: f64,
    pub beta2: f64,
    pub two_beam_objective: f64,
    pub single_beam_objective: Option<f64>,
    pub relative_gap: f64,
    /// Power on the steering beam, sampled over `(0, P]`.
    pub curve_beta1: Vec<f64>,
    /// Objective at each sample.
    pub curve_objective: Vec<f64>,
}

/// Optimal power split between a steering beam and a derivative beam for
/// one target, with the objective along the full-power line.
pub fn two_beams(
    n_tx: usize,
    n_rx: usize,
    theta_deg: f64,
    power: f64,
) -> Result<TwoBeamView, String> {
    let geometry = ArrayGeometry::new(n_tx, n_rx).map_err(|e| e.to_string())?;
    let report = verify_single_target_two_beams(&geometry, theta_deg.to_radians(), power)
        .map_err(|e| e.to_string())?;
    let curve_beta1: Vec<f64> = (1..=CURVE_POINTS)
        .map(|i| power * i as f64 / CURVE_POINTS as f64)
        .collect();
    let curve_objective = curve_beta1
        .iter()
        .map(|&b| two_beam_objective(b, power - b, report.a_t, report.a_r))
        .collect();
    Ok(TwoBeamView {
        beta1: report.beta1,
        beta2: report.beta2,
        two_beam_objective: report.two_beam_objective,
        single_beam_objective: report
            .single_beam_objective
            .is_finite()
            .then_some(report.single_beam_objective),
        relative_gap: report.relative_gap,
        curve_beta1,
        curve_objective,
    })
}

/// Design, extraction and reduction for targets and line-of-sight users.
#[derive(Debug, Clone, Serialize)]
pub struct DesignView {
    pub d: usize,
    pub bound: usize,
    pub sdr_beams: usize,
    pub reduced_beams: usize,
    pub reduction_steps: usize,
    pub power: f64,
    /// Angles in degrees.
    pub angles: Vec<f64>,
    /// Transmit power per angle from the communication beams.
    pub comm_pattern: Vec<f64>,
    /// Transmit power per angle from the sensing beams.
    pub sensing_pattern: Vec<f64>,
}

/// Minimizes the largest BCRB entry for the given targets, with
/// line-of-sight users at `user_deg`, and reduces the beam count to the
/// guaranteed bound.
pub fn design(
    n_tx: usize,
    target_deg: &[f64],
    user_deg: &[f64],
    cancel_interference: bool,
    theta_std_deg: f64,
) -> Result<DesignView, String> {
    let s = |e: &dyn std::fmt::Display| e.to_string();
    if target_deg.is_empty() {
        return Err("at least one target is needed".into());
    }
    let geometry = ArrayGeometry::new(n_tx, n_tx).map_err(|e| s(&e))?;
    let priors = target_deg
        .iter()
        .map(|&t| {
            TargetPrior::new(
                Complex::new(1.0, 0.0),
                0.5,
                t.to_radians(),
                theta_std_deg.to_radians(),
            )
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| s(&e))?;
    let (bfim, quad) =
        build_multitarget_bfim(&geometry, &priors, 10, 1.0, 15).map_err(|e| s(&e))?;
    let channels = user_deg
        .iter()
        .map(|&u| steering_vector(&geometry, u.to_radians(), Side::Tx))
        .collect();
    let mode = if cancel_interference {
        InterferenceMode::Ic
    } else {
        InterferenceMode::Nic
    };
    let sc = IsacScenario::new(
        geometry,
        channels,
        vec![10f64.powf(0.5); user_deg.len()],
        10.0,
        1.0,
        mode,
        SensingMetric::Bfim { bfim, quad },
    )
    .map_err(|e| s(&e))?;

    let built =
        build_sensing_design(&sc.metric, &sc, &Scalarization::MaxDiag).map_err(|e| s(&e))?;
    let sol = solve(&built.problem, &SolverOptions::default()).map_err(|e| s(&e))?;
    if !sol.is_optimal() {
        return Err(format!("design solve ended with {:?}", sol.status));
    }
    let (rk, r) = built.layout.covariances(&sol);
    let sdr_beams = extract_rank_one(&r, &rk, &sc.channels, 1e-6)
        .map_err(|e| s(&e))?
        .n_beams();
    let v0 = extract_rank_one(&r, &rk, &sc.channels, FACTOR_THRESHOLD).map_err(|e| s(&e))?;
    let target = ReductionTarget::from_beamformers(&v0, &sc);
    let (v, trace) = reduce_to_bound(
        &v0,
        &sc,
        &target,
        &ReduceOptions::default(),
        &SolverOptions::precise(),
    )
    .map_err(|e| s(&e))?;

    let angles: Vec<f64> = (0..PATTERN_POINTS)
        .map(|i| -90.0 + 180.0 * i as f64 / (PATTERN_POINTS - 1) as f64)
        .collect();
    let pattern = |m: &ComplexMatrix| -> Vec<f64> {
        angles
            .iter()
            .map(|&t| {
                let a = steering_vector(&sc.geometry, t.to_radians(), Side::Tx);
                (m.adjoint() * a).norm_squared()
            })
            .collect()
    };
    Ok(DesignView {
        d: sc.metric.d(),
        bound: guaranteed_bound(mode, sc.k(), sc.metric.d()),
        sdr_beams,
        reduced_beams: v.n_beams(),
        reduction_steps: trace.steps.len(),
        power: v.power(),
        comm_pattern: pattern(&v.comm_block()),
        sensing_pattern: pattern(&v.sensing()),
        angles,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

/// Bound for `K` users and `d` quadratic terms in mode `ic`, `nic` or `radar`.
#[wasm_bindgen(js_name = bound)]
pub fn js_bound(k: usize, d: usize, mode: &str) -> Result<usize, JsValue> {
    bound_value(k, d, mode).map_err(|e| JsValue::from_str(&e))
}

/// Bound table for line-of-sight targets as CSV `k,n_tr,d,ic,nic`.
#[wasm_bindgen(js_name = boundTable)]
pub fn js_bound_table(k_max: usize, n_targets_max: usize) -> String {
    let ks: Vec<usize> = (0..=k_max).collect();
    let ns: Vec<usize> = (1..=n_targets_max).collect();
    multitarget_bound_table(&ks, &ns)
}

/// Two-beam explorer as JSON.
#[wasm_bindgen(js_name = twoBeams)]
pub fn js_two_beams(
    n_tx: usize,
    n_rx: usize,
    theta_deg: f64,
    power: f64,
) -> Result<String, JsValue> {
    to_json(two_beams(n_tx, n_rx, theta_deg, power))
}

/// Reduced design and its beam pattern as JSON.
#[wasm_bindgen(js_name = design)]
pub fn js_design(
    n_tx: usize,
    target_deg: Vec<f64>,
    user_deg: Vec<f64>,
    cancel_interference: bool,
    theta_std_deg: f64,
) -> Result<String, JsValue> {
    to_json(design(
        n_tx,
        &target_deg,
        &user_deg,
        cancel_interference,
        theta_std_deg,
    ))
}
