//! Constructive rank reduction of beamformer sets.
//!
//! A reduction step solves a homogeneous real linear system whose null
//! vectors describe Gram-matrix perturbations that leave every quadratic
//! sensing value and every SINR unchanged, scales the perturbation until a
//! factor becomes singular and refactors. Repeating the step drives the
//! number of beamformers down to the sum bound (interference cancelled at
//! the users) or the hypotenuse bound (interference treated as noise).

use std::sync::Arc;

use thiserror::Error;

use crate::bounds::{bound_hypotenuse, bound_sum};
use crate::channel::{
    hermitian_coords, hermitian_from_coords, ArrayGeometry, InterferenceMode, IsacScenario, Side,
};
use crate::metrics::{sinr_ic, sinr_nic, BeamformerMatrix, MetricsError};
use crate::numerics::{
    eig_hermitian, inv_sqrt_pd, normalize_inf, orthonormal_complement, orthonormalize_columns,
    real_nullspace_basis, unitary_polar, Complex, ComplexMatrix, ComplexVector, HermitianMatrix,
    NumericsError, RealMatrix, RealVector,
};
use crate::sdp::{
    psd_factor_tolerant, solve, BlockKind, ConicProblem, LinearExpr, SdpError, Sense, SolveStatus,
    SolverOptions,
};

/// Errors of the reduction machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReduceError {
    #[error("no reduction possible: {n} beamformers, K = {k}, d = {d}")]
    NoReduction { n: usize, k: usize, d: usize },
    #[error("scaling is attained by the coefficient of user {user}")]
    DegenerateDelta { user: usize },
    #[error("top rows of the factor deviate from orthonormal by {deviation:.3e}")]
    OrthonormalityLoss { deviation: f64 },
    #[error("reduction stalled at {n} beamformers")]
    StalledReduction { n: usize },
    #[error("step violated conservation: {0}")]
    ConservationFailure(String),
    #[error("sensing beamformers are not orthogonal to the channels (leakage {leakage:.3e})")]
    NotOrthogonal { leakage: f64 },
    #[error("two-beam condition violated: {0}")]
    ConditionViolated(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

/// Values a reduction must preserve.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionTarget {
    /// `c_i = Tr(Q_i V V^H)`.
    pub quad_values: Vec<f64>,
    /// SINR floor `γ'` per user.
    pub sinr_floor: Vec<f64>,
    /// Total power the reduced set may not exceed.
    pub power_cap: f64,
    pub quad_matrices: Arc<Vec<HermitianMatrix>>,
}

impl ReductionTarget {
    /// Reads the values achieved by `v` in the scenario.
    pub fn from_beamformers(v: &BeamformerMatrix, scenario: &IsacScenario) -> Self {
        let quads = scenario.metric.quad_spec().q_matrices().to_vec();
        let r = v.gram();
        Self {
            quad_values: quads.iter().map(|q| q.inner(&r)).collect(),
            sinr_floor: sinr_for(scenario.interference_mode, scenario, v),
            power_cap: v.power(),
            quad_matrices: Arc::new(quads),
        }
    }

    pub fn d(&self) -> usize {
        self.quad_values.len()
    }
}

fn sinr_for(mode: InterferenceMode, scenario: &IsacScenario, v: &BeamformerMatrix) -> Vec<f64> {
    match mode {
        InterferenceMode::Ic => sinr_ic(scenario, v),
        InterferenceMode::Nic => sinr_nic(scenario, v),
    }
}

/// What fixed the scaling of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum DeltaSource {
    CommBeam(usize),
    SensingEigen(usize),
}

/// Diagnostics of one successful step.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StepRecord {
    pub n_before: usize,
    pub n_after: usize,
    /// `max_i |c_i' − c_i| / max(1, |c_i|)`.
    pub max_quad_residual: f64,
    /// `max_k (γ'_k − SINR_k)⁺`.
    pub max_sinr_deficit: f64,
    /// `|P' − P| / P`.
    pub power_drift: f64,
    pub delta_used: f64,
    pub delta_source: DeltaSource,
}

/// All steps taken by a driver run.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct ReductionTrace {
    pub steps: Vec<StepRecord>,
    /// Whether sensing beams were first made orthogonal to the channels.
    pub orthogonalized: bool,
}

/// Tolerances of the reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReduceOptions {
    /// Relative singular-value threshold of the null space.
    pub nullspace_tol: f64,
    /// Rank threshold when factoring `I − M`.
    pub rank_tol: f64,
    /// Per-step conservation tolerance.
    pub step_tol: f64,
    /// Extra attempts with another null vector before giving up.
    pub retries: usize,
    /// Relative leakage above which sensing beams are re-orthogonalized.
    pub leakage_tol: f64,
    /// Reject steps that change the total power. Power is only stationary
    /// when the input is optimal for the power-minimization problem.
    pub check_power: bool,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        Self {
            nullspace_tol: 1e-9,
            rank_tol: 1e-8,
            step_tol: 1e-6,
            retries: 3,
            leakage_tol: 1e-7,
            check_power: true,
        }
    }
}

/// Result of one step.
#[derive(Debug, Clone)]
pub struct ReductionStep {
    pub beamformers: BeamformerMatrix,
    pub record: StepRecord,
}

fn normalize_rows(m: &mut RealMatrix) {
    for mut row in m.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
}

/// Orthonormal basis of the complement of `q` in `R^m` (Householder).
fn complement_of(q: &RealVector) -> RealMatrix {
    let m = q.len();
    let nq = q.norm();
    if nq == 0.0 {
        return RealMatrix::identity(m, m);
    }
    let mut u = q.clone();
    u[0] += if q[0] >= 0.0 { nq } else { -nq };
    let uu = u.norm_squared();
    let h = RealMatrix::identity(m, m) - (&u * u.transpose()) * (2.0 / uu);
    h.columns(1, m - 1).into_owned()
}

/// Picks a null vector; with a null space of dimension ≥ 2 the choice also
/// annihilates the first-order power change.
fn choose_null_vector(
    system: &RealMatrix,
    power_row: &RealVector,
    tol: f64,
    attempt: usize,
) -> Result<RealVector, ReduceError> {
    let mut m = system.clone();
    normalize_rows(&mut m);
    let basis = real_nullspace_basis(&m, tol)?;
    let dim = basis.ncols();
    if dim == 0 {
        return Err(NumericsError::Empty.into());
    }
    let w = if dim == 1 {
        RealVector::from_element(1, 1.0)
    } else {
        let q = basis.tr_mul(power_row);
        let comp = complement_of(&q);
        comp.column(attempt % comp.ncols()).into_owned()
    };
    Ok(normalize_inf(&basis * w))
}

/// Eigen-decomposition of `M` plus the signed value of largest magnitude
/// among `a ∪ eig(M)`; sensing eigenvalues win ties.
fn pick_delta(a: &[f64], m: &HermitianMatrix) -> Result<(f64, DeltaSource), ReduceError> {
    let mut best = (0.0_f64, DeltaSource::SensingEigen(0));
    if m.dim() > 0 {
        let eig = eig_hermitian(m)?;
        for (j, &l) in eig.eigenvalues.iter().enumerate() {
            if l.abs() > best.0.abs() {
                best = (l, DeltaSource::SensingEigen(j));
            }
        }
    }
    let scale = best
        .0
        .abs()
        .max(a.iter().fold(0.0_f64, |x, v| x.max(v.abs())));
    for (k, &ak) in a.iter().enumerate() {
        if ak.abs() > best.0.abs() + 1e-12 * scale {
            best = (ak, DeltaSource::CommBeam(k));
        }
    }
    if best.0 == 0.0 {
        return Err(NumericsError::Empty.into());
    }
    Ok(best)
}

fn step_record(
    before: &BeamformerMatrix,
    after: &BeamformerMatrix,
    target: &ReductionTarget,
    sinr: &[f64],
    delta: (f64, DeltaSource),
) -> StepRecord {
    let r = after.gram();
    let max_quad_residual = target
        .quad_matrices
        .iter()
        .zip(&target.quad_values)
        .map(|(q, &c)| (q.inner(&r) - c).abs() / c.abs().max(1.0))
        .fold(0.0, f64::max);
    let max_sinr_deficit = sinr
        .iter()
        .zip(&target.sinr_floor)
        .map(|(&s, &g)| (g - s).max(0.0))
        .fold(0.0, f64::max);
    let p0 = before.power();
    StepRecord {
        n_before: before.n_beams(),
        n_after: after.n_beams(),
        max_quad_residual,
        max_sinr_deficit,
        power_drift: (after.power() - p0).abs() / p0.max(f64::MIN_POSITIVE),
        delta_used: delta.0,
        delta_source: delta.1,
    }
}

fn check_record(rec: &StepRecord, opts: &ReduceOptions) -> Result<(), ReduceError> {
    let tol = opts.step_tol;
    let power_bad = opts.check_power && rec.power_drift > tol;
    if rec.max_quad_residual > tol || rec.max_sinr_deficit > tol || power_bad {
        return Err(ReduceError::ConservationFailure(format!(
            "quad {:.2e}, sinr {:.2e}, power {:.2e}",
            rec.max_quad_residual, rec.max_sinr_deficit, rec.power_drift
        )));
    }
    Ok(())
}

fn check_target_shape(target: &ReductionTarget, k: usize) -> Result<(), ReduceError> {
    if target.d() == 0 || target.quad_matrices.len() != target.d() {
        return Err(ReduceError::InvalidInput(
            "target needs d ≥ 1 quadratic values".into(),
        ));
    }
    if target.sinr_floor.len() != k {
        return Err(ReduceError::InvalidInput(
            "one SINR floor per user is required".into(),
        ));
    }
    Ok(())
}

/// One step with sensing interference cancelled at the users.
///
/// Unknowns are the real scalings `a_k` of the communication beams and a
/// Hermitian `M` acting on the sensing block; the update is
/// `v_k ← √(1 − a_k)·v_k`, `V_s ← V_s U_s` with `U_s U_s^H = I − M`.
pub fn ic_reduce_step(
    v: &BeamformerMatrix,
    target: &ReductionTarget,
    scenario: &IsacScenario,
    opts: &ReduceOptions,
    attempt: usize,
) -> Result<ReductionStep, ReduceError> {
    let k = v.k_comm();
    let ns = v.n_sensing();
    let d = target.d();
    check_target_shape(target, k)?;
    if ns == 0 || ns * ns <= d {
        return Err(ReduceError::NoReduction {
            n: v.n_beams(),
            k,
            d,
        });
    }
    let channels = &scenario.channels;
    let vs = v.sensing();
    let comm: Vec<ComplexVector> = (0..k).map(|j| v.comm(j)).collect();
    // Current SINRs are preserved exactly (they are at or above the floor).
    let gamma = sinr_ic(scenario, v);

    let cols = k + ns * ns;
    let mut system = RealMatrix::zeros(d + k, cols);
    for (i, q) in target.quad_matrices.iter().enumerate() {
        for (j, vk) in comm.iter().enumerate() {
            system[(i, j)] = q.quad_form(vk);
        }
        let coords = hermitian_coords(&q.congruence(&vs.adjoint()));
        for (j, c) in coords.iter().enumerate() {
            system[(i, k + j)] = *c;
        }
    }
    for (u, h) in channels.iter().enumerate() {
        for (n, vn) in comm.iter().enumerate() {
            let g = h.dotc(vn).norm_sqr();
            system[(d + u, n)] = if n == u { g / gamma[u] } else { -g };
        }
    }
    let mut power_row = RealVector::zeros(cols);
    for (j, vk) in comm.iter().enumerate() {
        power_row[j] = vk.norm_squared();
    }
    let pc = hermitian_coords(&HermitianMatrix::gram(&vs.adjoint()));
    power_row.rows_mut(k, ns * ns).copy_from(&pc);

    let x = choose_null_vector(&system, &power_row, opts.nullspace_tol, attempt)?;
    let a: Vec<f64> = x.rows(0, k).iter().copied().collect();
    let m = hermitian_from_coords(x.rows(k, ns * ns).as_slice(), ns);
    let delta = pick_delta(&a, &m)?;
    if let DeltaSource::CommBeam(user) = delta.1 {
        return Err(ReduceError::DegenerateDelta { user });
    }
    let a: Vec<f64> = a.iter().map(|ak| ak / delta.0).collect();
    let m = m.scale(1.0 / delta.0);
    let rest = HermitianMatrix::identity(ns).sub(&m);
    let us = psd_factor_tolerant(&rest, opts.rank_tol, 1.0)?;
    if us.ncols() >= ns {
        return Err(ReduceError::ConservationFailure(
            "I − M did not lose rank".into(),
        ));
    }

    let n = v.n_tx();
    let mut comm_new = ComplexMatrix::zeros(n, k);
    for (j, vk) in comm.iter().enumerate() {
        comm_new.set_column(j, &vk.scale((1.0 - a[j]).max(0.0).sqrt()));
    }
    let out = BeamformerMatrix::from_parts(&comm_new, &(&vs * us))?;
    let record = step_record(v, &out, target, &sinr_ic(scenario, &out), delta);
    check_record(&record, opts)?;
    Ok(ReductionStep {
        beamformers: out,
        record,
    })
}

/// Largest relative leakage `‖h_k^H V_s‖ / (‖h_k‖ ‖V_s‖)`.
pub fn sensing_leakage(v: &BeamformerMatrix, channels: &[ComplexVector]) -> f64 {
    let vs = v.sensing();
    let nv = vs.norm();
    if nv == 0.0 {
        return 0.0;
    }
    channels
        .iter()
        .map(|h| (h.adjoint() * &vs).norm() / (h.norm() * nv))
        .fold(0.0, f64::max)
}

/// Hermitian coordinates of an `n × n` matrix that lie outside the top-left
/// `k × k` block.
fn outside_top_left(n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (k..n).collect();
    let mut pos = n;
    for i in 0..n {
        for j in (i + 1)..n {
            if j >= k {
                idx.push(pos);
                idx.push(pos + 1);
            }
            pos += 2;
        }
    }
    idx
}

/// One step with sensing interference treated as noise.
///
/// `V ← V U` with `U U^H = I − M`, where `M` has a zero `K × K` top-left
/// block, so the useful signal and the received power of every user are
/// unchanged and the sensing block stays orthogonal to the channels.
pub fn nic_reduce_step(
    v: &BeamformerMatrix,
    target: &ReductionTarget,
    scenario: &IsacScenario,
    opts: &ReduceOptions,
    attempt: usize,
) -> Result<ReductionStep, ReduceError> {
    let k = v.k_comm();
    let n = v.n_beams();
    let d = target.d();
    check_target_shape(target, k)?;
    if n * n <= k * k + d {
        return Err(ReduceError::NoReduction { n, k, d });
    }
    let leakage = sensing_leakage(v, &scenario.channels);
    if leakage > 1e-6 {
        return Err(ReduceError::NotOrthogonal { leakage });
    }
    let cols = v.columns();
    let idx = outside_top_left(n, k);
    let mut system = RealMatrix::zeros(d, idx.len());
    for (i, q) in target.quad_matrices.iter().enumerate() {
        let coords = hermitian_coords(&q.congruence(&cols.adjoint()));
        for (j, &c) in idx.iter().enumerate() {
            system[(i, j)] = coords[c];
        }
    }
    let pc = hermitian_coords(&HermitianMatrix::gram(&cols.adjoint()));
    let power_row = RealVector::from_iterator(idx.len(), idx.iter().map(|&c| pc[c]));
    let x = choose_null_vector(&system, &power_row, opts.nullspace_tol, attempt)?;
    let mut full = vec![0.0; n * n];
    for (j, &c) in idx.iter().enumerate() {
        full[c] = x[j];
    }
    let m = hermitian_from_coords(&full, n);
    let delta = pick_delta(&[], &m)?;
    let m = m.scale(1.0 / delta.0);
    let ut = psd_factor_tolerant(&HermitianMatrix::identity(n).sub(&m), opts.rank_tol, 1.0)?;
    let r = ut.ncols();
    if r >= n {
        return Err(ReduceError::ConservationFailure(
            "I − M did not lose rank".into(),
        ));
    }
    let u = if k == 0 {
        ut
    } else {
        let q1 = ut.rows(0, k).into_owned();
        let deviation = (&q1 * q1.adjoint() - ComplexMatrix::identity(k, k)).norm();
        if deviation > 1e-6 {
            return Err(ReduceError::OrthonormalityLoss { deviation });
        }
        let q1 = orthonormalize_columns(&q1.adjoint()).adjoint();
        if q1.nrows() != k {
            return Err(ReduceError::OrthonormalityLoss { deviation });
        }
        let mut rot = ComplexMatrix::zeros(r, r);
        rot.columns_mut(0, k).copy_from(&q1.adjoint());
        if r > k {
            let qp = orthonormal_complement(&q1)?;
            rot.columns_mut(k, r - k).copy_from(&qp.adjoint());
        }
        let mut u = &ut * rot;
        // The top block equals [I_K 0] by construction; pin it exactly.
        u.rows_mut(0, k).fill(Complex::new(0.0, 0.0));
        for j in 0..k {
            u[(j, j)] = Complex::new(1.0, 0.0);
        }
        u
    };
    let out = v.times(&u)?;
    let record = step_record(v, &out, target, &sinr_nic(scenario, &out), delta);
    check_record(&record, opts)?;
    Ok(ReductionStep {
        beamformers: out,
        record,
    })
}

fn sinr_weights(scenario: &IsacScenario, r: &HermitianMatrix, gamma: &[f64]) -> Vec<f64> {
    scenario
        .channels
        .iter()
        .zip(gamma)
        .map(|(h, &g)| (1.0 + 1.0 / g) / (r.quad_form(h) + scenario.noise_var))
        .collect()
}

fn unit_coordinate_matrices(n: usize) -> Vec<HermitianMatrix> {
    (0..n * n)
        .map(|j| {
            let mut e = vec![0.0; n * n];
            e[j] = 1.0;
            hermitian_from_coords(&e, n)
        })
        .collect()
}

/// Re-splits `V V^H` so that the sensing block is orthogonal to every
/// channel, without lowering any SINR treated-as-noise below `gamma`.
///
/// A weighted max-min relaxation over the communication covariances is
/// solved first; a second phase at fixed optimal level minimizes the
/// remaining sensing energy along the channels. The communication beams
/// are then re-aligned by a polar factor so that the Gram matrix is kept
/// exactly and the leakage is zero.
pub fn orthogonalize_sensing(
    v: &BeamformerMatrix,
    scenario: &IsacScenario,
    gamma: &[f64],
    solver: &SolverOptions,
    rank_tol: f64,
) -> Result<BeamformerMatrix, ReduceError> {
    let k = v.k_comm();
    if k == 0 {
        return Ok(v.clone());
    }
    if gamma.len() != k {
        return Err(ReduceError::InvalidInput(
            "one SINR floor per user is required".into(),
        ));
    }
    let n = v.n_tx();
    let r_hat = v.gram();
    let w = sinr_weights(scenario, &r_hat, gamma);

    let mut p = ConicProblem::new();
    let rk: Vec<usize> = (0..k)
        .map(|j| p.add_block(&format!("R_{}", j + 1), n, BlockKind::Hermitian))
        .collect();
    let wb = p.add_block("W", n, BlockKind::Hermitian);
    let t = p.add_scalar("t", false);
    let coords = hermitian_coords(&r_hat);
    for (j, e) in unit_coordinate_matrices(n).into_iter().enumerate() {
        let mut expr = LinearExpr::new().with_block(wb, e.clone());
        for &b in &rk {
            expr.blocks.push((b, e.clone()));
        }
        p.add_constraint(expr, Sense::Eq, coords[j], &format!("split_{j}"));
    }
    let level_rows: Vec<usize> = (0..k)
        .map(|j| {
            let h = &scenario.channels[j];
            let expr = LinearExpr::new()
                .with_block(rk[j], HermitianMatrix::outer(h).scale(w[j]))
                .with_scalar(t, -1.0);
            p.add_constraint(expr, Sense::Ge, 0.0, &format!("level_{j}"));
            p.constraints.len() - 1
        })
        .collect();
    p.objective = LinearExpr::new().with_scalar(t, -1.0);
    let phase1 = solve(&p, solver)?;
    if phase1.status != SolveStatus::Optimal {
        return Err(SdpError::NotSolved(phase1.status).into());
    }
    let t_star = phase1.scalars[t];

    // Phase 2: fix the level, push the sensing energy off the channels. A
    // small back-off leaves the solver some slack; level 1 reproduces the
    // floors exactly and is always feasible (the current split attains it).
    let level = (t_star - 1e-5 * t_star.abs()).max(1.0);
    for &row in &level_rows {
        p.constraints[row].expr.scalars.clear();
        p.constraints[row].rhs = level;
    }
    let mut hh = HermitianMatrix::zeros(n);
    for h in &scenario.channels {
        hh = hh.add(&HermitianMatrix::outer(h));
    }
    p.objective = LinearExpr::new().with_block(wb, hh);
    let phase2 = solve(&p, solver)?;
    if phase2.status != SolveStatus::Optimal {
        return Err(SdpError::NotSolved(phase2.status).into());
    }

    let mut vc = ComplexMatrix::zeros(n, k);
    for (j, &block) in rk.iter().enumerate().take(k) {
        let rj = &phase2.blocks[block];
        let h = &scenario.channels[j];
        let useful = rj.quad_form(h);
        if !(useful > 1e-12) {
            return Err(SdpError::ZeroUsefulPower { user: j }.into());
        }
        vc.set_column(j, &(rj.matrix() * h).unscale(useful.sqrt()));
    }
    polar_realign(&r_hat, &scenario.channel_matrix(), &vc, rank_tol)
}

/// Splits `R` into `F W` plus an orthogonal remainder: `F = R H G^{-1/2}`
/// with `G = H^H R H`, and `W` the unitary polar factor of
/// `G^{-1/2} H^H V_c`.
pub fn polar_realign(
    r: &HermitianMatrix,
    h: &ComplexMatrix,
    vc: &ComplexMatrix,
    rank_tol: f64,
) -> Result<BeamformerMatrix, ReduceError> {
    let g = r.congruence(&h.adjoint());
    let g_is = inv_sqrt_pd(&g)?;
    let f = r.matrix() * h * g_is.matrix();
    let w0 = g_is.matrix() * h.adjoint() * vc;
    let vc_new = &f * unitary_polar(&w0)?;
    let rest = r.sub(&HermitianMatrix::gram(&f));
    let vs = psd_factor_tolerant(&rest, rank_tol, r.norm_fro())?;
    Ok(BeamformerMatrix::from_parts(&vc_new, &vs)?)
}

/// Repeats reduction steps until the applicable bound is met.
///
/// In the NIC mode leaking sensing beams are first re-orthogonalized. A
/// step that should apply but fails numerically is retried with another
/// null vector before the run is declared stalled.
pub fn reduce_to_bound(
    v0: &BeamformerMatrix,
    scenario: &IsacScenario,
    target: &ReductionTarget,
    opts: &ReduceOptions,
    solver: &SolverOptions,
) -> Result<(BeamformerMatrix, ReductionTrace), ReduceError> {
    let k = scenario.k();
    if v0.k_comm() != k {
        return Err(ReduceError::InvalidInput(
            "beamformer split does not match K".into(),
        ));
    }
    let d = target.d();
    let mut trace = ReductionTrace::default();
    let mut v = v0.clone();
    let mode = scenario.interference_mode;
    if mode == InterferenceMode::Nic
        && k > 0
        && sensing_leakage(&v, &scenario.channels) > opts.leakage_tol
    {
        let gamma = sinr_nic(scenario, &v);
        v = orthogonalize_sensing(&v, scenario, &gamma, solver, opts.rank_tol)?;
        trace.orthogonalized = true;
    }
    loop {
        let applies = match mode {
            InterferenceMode::Ic => v.n_sensing().pow(2) > d,
            InterferenceMode::Nic => v.n_beams().pow(2) > k * k + d,
        };
        if !applies {
            break;
        }
        let mut done = None;
        for attempt in 0..=opts.retries {
            let step = match mode {
                InterferenceMode::Ic => ic_reduce_step(&v, target, scenario, opts, attempt),
                InterferenceMode::Nic => nic_reduce_step(&v, target, scenario, opts, attempt),
            };
            match step {
                Ok(s) => {
                    done = Some(s);
                    break;
                }
                Err(
                    ReduceError::DegenerateDelta { .. }
                    | ReduceError::ConservationFailure(_)
                    | ReduceError::OrthonormalityLoss { .. }
                    | ReduceError::Numerics(_),
                ) => continue,
                Err(e) => return Err(e),
            }
        }
        match done {
            Some(s) => {
                trace.steps.push(s.record);
                v = s.beamformers;
            }
            None => return Err(ReduceError::StalledReduction { n: v.n_beams() }),
        }
    }
    Ok((v, trace))
}

/// Bound that [`reduce_to_bound`] guarantees for the scenario's mode.
pub fn guaranteed_bound(mode: InterferenceMode, k: usize, d: usize) -> usize {
    match mode {
        InterferenceMode::Ic => bound_sum(k, d),
        InterferenceMode::Nic => bound_hypotenuse(k, d),
    }
}

/// Outcome of the single-target two-beam check.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TwoBeamReport {
    /// `‖ȧ_T‖²`.
    pub a_t: f64,
    /// `‖ȧ_R‖²`.
    pub a_r: f64,
    /// `c = ‖ȧ_T‖² − ‖ȧ_R‖²`.
    pub c: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub two_beam_objective: f64,
    /// Best single-beam objective (`+∞` when the receive derivative vanishes).
    pub single_beam_objective: f64,
    /// `(single − two) / single`, taken as 1 when the single-beam value is infinite.
    pub relative_gap: f64,
    pub grid_beta1: f64,
    pub grid_error: f64,
}

/// `2/β₁ + 1/(β₁‖ȧ_R‖² + β₂‖ȧ_T‖²)`.
pub fn two_beam_objective(beta1: f64, beta2: f64, a_t: f64, a_r: f64) -> f64 {
    let s = beta1 * a_r + beta2 * a_t;
    if beta1 <= 0.0 || s <= 0.0 {
        return f64::INFINITY;
    }
    2.0 / beta1 + 1.0 / s
}

/// Checks that two beams beat one for a single line-of-sight target.
///
/// Uses the classical CRB of `(α, θ)` with beams along `a_T` and
/// `ȧ_T/‖ȧ_T‖`, the closed-form power split, and a two-level grid search
/// over `β₁` on the full-power line as an independent check.
pub fn verify_single_target_two_beams(
    geometry: &ArrayGeometry,
    theta: f64,
    power: f64,
) -> Result<TwoBeamReport, ReduceError> {
    let (nt, nr) = (geometry.n_tx as f64, geometry.n_rx as f64);
    if !(power > 0.0) {
        return Err(ReduceError::InvalidInput("power must be positive".into()));
    }
    if geometry.n_tx <= geometry.n_rx {
        return Err(ReduceError::ConditionViolated(
            "requires n_tx > n_rx".into(),
        ));
    }
    let k =
        (2.0 * std::f64::consts::PI * geometry.spacing_wavelengths * theta.cos()).powi(2) / 12.0;
    if !(nt * nt - nr * nr > 2.0 * k * (nr * nr - 1.0).powi(2)) {
        return Err(ReduceError::ConditionViolated(format!(
            "n_tx² − n_rx² = {} is not above {}",
            nt * nt - nr * nr,
            2.0 * k * (nr * nr - 1.0).powi(2)
        )));
    }
    let a_t = crate::channel::steering_derivative(geometry, theta, Side::Tx).norm_squared();
    let a_r = crate::channel::steering_derivative(geometry, theta, Side::Rx).norm_squared();
    let c = a_t - a_r;
    let beta1 = (power * a_t / (c + (c / 2.0).sqrt())).min(power);
    let beta2 = power - beta1;
    let two = two_beam_objective(beta1, beta2, a_t, a_r);
    let single = two_beam_objective(power, 0.0, a_t, a_r);
    let relative_gap = if single.is_infinite() {
        1.0
    } else {
        (single - two) / single
    };

    let search = |lo: f64, hi: f64| -> f64 {
        let mut best = (f64::INFINITY, lo);
        for i in 0..=1000 {
            let b1 = lo + (hi - lo) * i as f64 / 1000.0;
            let val = two_beam_objective(b1, power - b1, a_t, a_r);
            if val < best.0 {
                best = (val, b1);
            }
        }
        best.1
    };
    let coarse = search(0.0, power);
    let step = power / 1000.0;
    let grid_beta1 = search((coarse - step).max(0.0), (coarse + step).min(power));
    Ok(TwoBeamReport {
        a_t,
        a_r,
        c,
        beta1,
        beta2,
        two_beam_objective: two,
        single_beam_objective: single,
        relative_gap,
        grid_beta1,
        grid_error: (grid_beta1 - beta1).abs(),
    })
}
