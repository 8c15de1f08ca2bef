//! Problem builders and rank-one extraction against closed forms and
//! feasibility oracles.

mod common;

use common::*;
use isac_core::channel::*;
use isac_core::metrics::{bcrb_scalarize, sinr_ic, sinr_nic, BcrbMode, BeamformerMatrix};
use isac_core::numerics::{eig_hermitian, hermitian_rank, ComplexVector, HermitianMatrix};
use isac_core::sdp::*;

fn quad_scenario(
    h: Vec<ComplexVector>,
    qs: Vec<HermitianMatrix>,
    gamma: f64,
    mode: InterferenceMode,
) -> IsacScenario {
    let n = qs[0].dim();
    let k = h.len();
    let d = qs.len();
    let spec = QuadraticMetricSpec::new(qs, Scalarization::WeightedSum(vec![1.0; d])).unwrap();
    IsacScenario::new(
        ArrayGeometry::new(n, 1).unwrap(),
        h,
        vec![gamma; k],
        10.0,
        0.5,
        mode,
        SensingMetric::Quadratic(spec),
    )
    .unwrap()
}

fn solve_ok(built: &BuiltProblem) -> SdpSolution {
    let sol = solve(&built.problem, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    sol
}

/// `u` orthogonal to `h`, unit norm.
fn orthogonal_unit(h: &ComplexVector, x: &ComplexVector) -> ComplexVector {
    let hn = h.unscale(h.norm());
    let u = x - &hn * hn.dotc(x);
    u.unscale(u.norm())
}

#[test]
fn single_user_power_is_matched_filter_plus_sensing() {
    let mut r = rng(1);
    let h = gaussian_vector(&mut r, 4);
    let u = orthogonal_unit(&h, &gaussian_vector(&mut r, 4));
    let (gamma, noise, cval) = (2.0, 0.5, 0.8);
    let want = gamma * noise / h.norm_squared() + cval;
    let mut powers = Vec::new();
    for mode in [InterferenceMode::Ic, InterferenceMode::Nic] {
        let s = quad_scenario(
            vec![h.clone()],
            vec![HermitianMatrix::outer(&u)],
            gamma,
            mode,
        );
        let targets = PowerMinTargets::Quads(vec![cval]);
        let built = match mode {
            InterferenceMode::Ic => build_power_min_ic(&s, &targets),
            InterferenceMode::Nic => build_power_min_nic(&s, &targets),
        }
        .unwrap();
        let sol = solve_ok(&built);
        assert!(
            (sol.objective - want).abs() < 1e-5 * want,
            "{mode:?}: {} vs {want}",
            sol.objective
        );
        powers.push(sol.objective);
    }
    assert!((powers[0] - powers[1]).abs() < 1e-5 * want);
}

#[test]
fn zero_users_build_a_single_block() {
    let mut r = rng(2);
    let a = gaussian_vector(&mut r, 3);
    let s = quad_scenario(
        vec![],
        vec![HermitianMatrix::outer(&a)],
        1.0,
        InterferenceMode::Ic,
    );
    let built = build_power_min_ic(&s, &PowerMinTargets::Quads(vec![1.0])).unwrap();
    assert_eq!(built.problem.blocks.len(), 1);
    let sol = solve_ok(&built);
    // All power along a: Tr(a a^H R) = 1 with R = t a a^H / ‖a‖².
    let want = 1.0 / a.norm_squared();
    assert!((sol.objective - want).abs() < 1e-6 * want);
    let nic = build_power_min_nic(&s, &PowerMinTargets::Quads(vec![1.0])).unwrap();
    assert!((solve_ok(&nic).objective - sol.objective).abs() < 1e-6 * want);
}

#[test]
fn nic_sensing_block_is_orthogonal_to_channels() {
    let s = multitarget_scenario(3, 8, 1, 2, InterferenceMode::Nic);
    let built = build_sensing_design(&s.metric, &s, &Scalarization::MaxDiag).unwrap();
    let sol = solve_ok(&built);
    let block = built.layout.sensing_block.unwrap();
    let basis = built.layout.sensing_basis.as_ref().unwrap();
    let rs = sol.blocks[block].congruence(basis);
    assert!(rs.norm_fro() > 1e-3);
    for h in &s.channels {
        assert!((rs.matrix() * h).norm() <= 1e-7 * h.norm() * rs.norm_fro());
    }
}

#[test]
fn full_channel_trace_design_hits_equal_power() {
    let (nt, p) = (4, 4.0);
    let g = ArrayGeometry::new(nt, 1).unwrap();
    let (bfim, quad) = build_full_channel_bfim(&g, &vec![1.0; nt], 1, 1.0).unwrap();
    let s = IsacScenario::new(
        g,
        vec![],
        vec![],
        p,
        1.0,
        InterferenceMode::Ic,
        SensingMetric::Bfim {
            bfim: bfim.clone(),
            quad,
        },
    )
    .unwrap();
    let built = build_sensing_design(&s.metric, &s, &Scalarization::Trace).unwrap();
    let (sol, v) = solve_and_extract(&built, &s, &SolverOptions::default(), 1e-6).unwrap();
    let closed = 2.0 * nt as f64 / (1.0 + 2.0 * p / nt as f64);
    assert!((closed - 8.0 / 3.0).abs() < 1e-15);
    assert!(
        (sol.objective - closed).abs() < 1e-5 * closed,
        "{} vs {closed}",
        sol.objective
    );
    let direct =
        bcrb_scalarize(&assemble_bfim(&bfim, v.columns()).unwrap(), BcrbMode::Trace).unwrap();
    assert!((direct - closed).abs() < 1e-5 * closed);
    // Equal power along every eigen-direction, so N_T beams.
    let gram = v.gram();
    for l in eig_hermitian(&gram).unwrap().eigenvalues {
        assert!((l - p / nt as f64).abs() < 1e-4);
    }
    assert_eq!(v.n_beams(), nt);
}

#[test]
fn snr_design_puts_power_on_top_eigenvector() {
    let mut r = rng(4);
    let b = gaussian_matrix(&mut r, 4, 4);
    let q = HermitianMatrix::gram(&b);
    let s = quad_scenario(vec![], vec![q.clone()], 1.0, InterferenceMode::Ic);
    let built =
        build_sensing_design(&s.metric, &s, &Scalarization::WeightedSum(vec![1.0])).unwrap();
    let (sol, v) = solve_and_extract(&built, &s, &SolverOptions::default(), 1e-6).unwrap();
    let e = eig_hermitian(&q).unwrap();
    let top = *e.eigenvalues.last().unwrap();
    assert!((-sol.objective - top * s.power_budget).abs() < 1e-5 * top * s.power_budget);
    assert_eq!(v.n_beams(), 1);
    let u = e.eigenvectors.column(3).into_owned();
    assert!(
        (v.columns().column(0).dotc(&u).norm_sqr() - s.power_budget).abs() < 1e-4 * s.power_budget
    );
}

#[test]
fn infeasible_targets_are_reported() {
    let mut r = rng(5);
    let h = gaussian_vector(&mut r, 3);
    let a = gaussian_vector(&mut r, 3);
    let mut s = quad_scenario(
        vec![h],
        vec![HermitianMatrix::outer(&a)],
        1e6,
        InterferenceMode::Ic,
    );
    s.power_budget = 1e-3;
    let built =
        build_sensing_design(&s.metric, &s, &Scalarization::WeightedSum(vec![1.0])).unwrap();
    let sol = solve(&built.problem, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
}

#[test]
fn extraction_examples() {
    let e1 = ComplexVector::from_fn(2, |i, _| c(if i == 0 { 1.0 } else { 0.0 }, 0.0));
    let id = HermitianMatrix::identity(2);
    let v = extract_rank_one(
        &id,
        std::slice::from_ref(&id),
        std::slice::from_ref(&e1),
        1e-8,
    )
    .unwrap();
    assert!((v.comm(0) - &e1).norm() < 1e-14);
    assert_eq!(v.n_sensing(), 1);

    let mut r = rng(6);
    let x = gaussian_vector(&mut r, 4);
    let h = gaussian_vector(&mut r, 4);
    let rk = HermitianMatrix::outer(&x);
    let v = extract_rank_one(
        &rk,
        std::slice::from_ref(&rk),
        std::slice::from_ref(&h),
        1e-8,
    )
    .unwrap();
    let w = v.comm(0);
    assert!((w.dotc(&x).norm() - w.norm() * x.norm()).abs() < 1e-10 * x.norm_squared());
    assert_eq!(v.n_sensing(), 0);

    let h = gaussian_vector(&mut r, 3);
    assert!(matches!(
        extract_rank_one(
            &HermitianMatrix::identity(3),
            &[HermitianMatrix::zeros(3)],
            &[h],
            1e-8
        ),
        Err(SdpError::ZeroUsefulPower { user: 0 })
    ));
}

#[test]
fn extraction_is_dominated_by_the_relaxed_covariance() {
    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let n = 5;
        let hs: Vec<ComplexVector> = (0..2).map(|_| gaussian_vector(&mut r, n)).collect();
        let rks: Vec<HermitianMatrix> = (0..2)
            .map(|_| HermitianMatrix::gram(&gaussian_matrix(&mut r, n, 3)))
            .collect();
        let total = rks[0]
            .add(&rks[1])
            .add(&HermitianMatrix::gram(&gaussian_matrix(&mut r, n, 2)));
        let v = extract_rank_one(&total, &rks, &hs, 1e-8).unwrap();
        for k in 0..2 {
            let vk = v.comm(k);
            let tilde = HermitianMatrix::outer(&vk);
            let gap = rks[k].sub(&tilde);
            assert!(eig_hermitian(&gap).unwrap().eigenvalues[0] >= -1e-9 * rks[k].norm_fro());
            assert!(
                (tilde.quad_form(&hs[k]) - rks[k].quad_form(&hs[k])).abs()
                    < 1e-10 * rks[k].norm_fro()
            );
            assert_eq!(hermitian_rank(&tilde, 1e-9).unwrap(), 1);
        }
        assert!(v.gram().sub(&total).norm_fro() < 1e-9 * total.norm_fro());
    }
}

/// Extraction from a solved power-minimization keeps feasibility and the
/// objective.
fn check_power_min_extraction(s: &IsacScenario, built: &BuiltProblem) {
    let (sol, v) = solve_and_extract(built, s, &SolverOptions::precise(), 1e-6).unwrap();
    assert!((v.power() - sol.objective).abs() <= 1e-6 * sol.objective);
    let got = match s.interference_mode {
        InterferenceMode::Ic => sinr_ic(s, &v),
        InterferenceMode::Nic => sinr_nic(s, &v),
    };
    for (g, t) in got.iter().zip(&s.sinr_targets) {
        assert!(*g >= t * (1.0 - 1e-5), "sinr {g} < {t}");
    }
    for k in 0..s.k() {
        assert_eq!(
            hermitian_rank(&HermitianMatrix::outer(&v.comm(k)), 1e-9).unwrap(),
            1
        );
    }
}

#[test]
fn power_min_extraction_is_tight() {
    for (seed, k, mode) in [
        (21, 1, InterferenceMode::Ic),
        (22, 3, InterferenceMode::Ic),
        (23, 2, InterferenceMode::Nic),
    ] {
        let mut s = multitarget_scenario(seed, 6, k, 1, mode);
        let mut r = rng(seed);
        let v0 = BeamformerMatrix::from_parts(
            &gaussian_matrix(&mut r, 6, k).scale(2.0),
            &gaussian_matrix(&mut r, 6, 6),
        )
        .unwrap();
        s.sinr_targets = isac_core::metrics::sinr(&s, &v0);
        let quads = s.metric.quad_spec().values_of_gram(&v0.gram());
        let targets = PowerMinTargets::Quads(quads.clone());
        let built = match mode {
            InterferenceMode::Ic => build_power_min_ic(&s, &targets),
            InterferenceMode::Nic => build_power_min_nic(&s, &targets),
        }
        .unwrap();
        check_power_min_extraction(&s, &built);
        let (_, v) = solve_and_extract(&built, &s, &SolverOptions::precise(), 1e-6).unwrap();
        for (q, want) in s.metric.quad_spec().q_matrices().iter().zip(&quads) {
            let got = quad_value(q, v.columns());
            assert!(
                (got - want).abs() <= 1e-6 * want.abs().max(1.0),
                "{got} vs {want}"
            );
        }
    }
}
