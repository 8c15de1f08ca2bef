//! Analytic checks with known answers: the bound table, the two-beam
//! single-target example, the full-channel closed form and the real
//! embedding of complex inverses.

use isac_core::bounds::{
    bound_hypotenuse, bound_radar, bound_sum, multitarget_bound_table, MetricKind,
};
use isac_core::channel::{
    assemble_bfim, build_full_channel_bfim, ArrayGeometry, InterferenceMode, IsacScenario,
    Scalarization, SensingMetric,
};
use isac_core::metrics::{bcrb_scalarize, BcrbMode};
use isac_core::numerics::{embed_complex, Complex, ComplexMatrix};
use isac_core::reduce::verify_single_target_two_beams;
use isac_core::sdp::{build_sensing_design, solve_and_extract, SolverOptions};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::scenario::trial_rng;

/// Golden bound table for `K ∈ {0, 1, 2}` and one or two targets.
pub const GOLDEN_TABLE: &str = "k,n_tr,d,ic,nic
0,1,4,2,2
1,1,4,3,2
2,1,4,4,2
0,2,15,3,3
1,2,15,4,4
2,2,15,5,4
";

/// Tolerance of the closed-form inverse and the block-inverse identity.
pub const INVERSE_TOL: f64 = 1e-10;
/// Tolerance of the conic solve against the equal-power optimum.
pub const SDP_TOL: f64 = 1e-5;
/// Agreement of the two-beam split with the grid search.
pub const GRID_TOL: f64 = 1e-4;
/// Margin by which two beams must beat one.
pub const GAP_MIN: f64 = 1e-3;

/// Result of one named check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// All checks of [`verify_analytic`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

fn gaussian_matrix(rng: &mut impl Rng, n: usize, m: usize) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_fn(n, m, |_, _| {
        Complex::new(
            rng.sample::<f64, _>(StandardNormal) * s,
            rng.sample::<f64, _>(StandardNormal) * s,
        )
    })
}

/// Table cells with literal expected values.
pub fn check_bound_table() -> Check {
    let mut bad = Vec::new();
    let mut expect = |what: &str, got: usize, want: usize| {
        if got != want {
            bad.push(format!("{what}: {got} != {want}"));
        }
    };
    let one_target_ic = [2, 3, 4, 5, 6, 7];
    let one_target_nic = [2, 2, 2, 3, 4, 5];
    let snr_ic = [1, 2, 3, 4, 5, 6];
    let snr_nic = [1, 1, 2, 3, 4, 5];
    for k in 0..6 {
        expect(
            &format!("one target IC K={k}"),
            bound_sum(k, 4),
            one_target_ic[k],
        );
        expect(
            &format!("one target NIC K={k}"),
            bound_hypotenuse(k, 4),
            one_target_nic[k],
        );
        expect(&format!("SNR IC K={k}"), bound_sum(k, 1), snr_ic[k]);
        let nic = isac_core::bounds::bound_for_d(
            k,
            1,
            isac_core::bounds::BoundMode::Nic,
            Default::default(),
        );
        expect(&format!("SNR NIC K={k}"), nic, snr_nic[k]);
    }
    expect(
        "sensing only, one target",
        bound_radar(MetricKind::MultiTargetLos { n_targets: 1 }),
        2,
    );
    let generated = multitarget_bound_table(&[0, 1, 2], &[1, 2]);
    if generated != GOLDEN_TABLE {
        bad.push("generated table differs from the golden table".into());
    }
    let ratio = bound_radar(MetricKind::MultiTargetLos { n_targets: 1000 }) as f64 / 1000.0;
    if (ratio - 1.871).abs() > 0.01 {
        bad.push(format!("large-target ratio {ratio}"));
    }
    let passed = bad.is_empty();
    let detail = if passed {
        format!("all cells match; ratio at 1000 targets {ratio:.4}")
    } else {
        bad.join("; ")
    };
    check("bound_table", passed, detail)
}

/// Two beams beat one for a single target at broadside.
pub fn check_two_beams(n_tx: usize) -> Check {
    let g = match ArrayGeometry::new(n_tx, 1) {
        Ok(g) => g,
        Err(e) => return check("two_beams", false, e.to_string()),
    };
    match verify_single_target_two_beams(&g, 0.0, 1.0) {
        Ok(r) => {
            let passed = r.relative_gap > GAP_MIN && r.grid_error <= GRID_TOL && r.beta2 > 0.0;
            check(
                "two_beams",
                passed,
                format!(
                    "beta1 {:.6} (grid {:.6}), beta2 {:.6}, gap {:.3e}",
                    r.beta1, r.grid_beta1, r.beta2, r.relative_gap
                ),
            )
        }
        Err(e) => check("two_beams", false, e.to_string()),
    }
}

/// Direct inversion of the real BFIM against `2 Tr((I/σ₀² + 2Υ V V^H/σ²)⁻¹)`.
pub fn check_full_channel_closed_form(trials: usize) -> Check {
    let (nt, snaps, noise, prior) = (4, 2, 0.7, 0.5);
    let g = ArrayGeometry::new(nt, 1).expect("valid geometry");
    let (spec, _) = build_full_channel_bfim(&g, &vec![prior; nt], snaps, noise)
        .expect("valid full-channel spec");
    let mut rng = trial_rng(7, 0);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let v = gaussian_matrix(&mut rng, nt, 3);
        let j = assemble_bfim(&spec, &v).expect("BFIM assembles");
        let direct = match j.real_part().try_inverse() {
            Some(inv) => inv.trace(),
            None => return check("closed_form", false, "BFIM not invertible".into()),
        };
        let m = ComplexMatrix::identity(nt, nt).unscale(prior)
            + (&v * v.adjoint()).scale(2.0 * snaps as f64 / noise);
        let closed = match m.try_inverse() {
            Some(inv) => 2.0 * inv.trace().re,
            None => return check("closed_form", false, "closed form not invertible".into()),
        };
        worst = worst.max((direct - closed).abs() / closed);
    }
    check(
        "closed_form",
        worst <= INVERSE_TOL,
        format!("worst relative difference {worst:.2e} over {trials} draws"),
    )
}

/// Trace design with equal priors reaches `2 N_T / (1 + 2P/N_T)`, which is
/// 8/3 at `N_T = P = 4`.
pub fn check_full_channel_sdp() -> Check {
    let (nt, p) = (4, 4.0);
    let closed = 2.0 * nt as f64 / (1.0 + 2.0 * p / nt as f64);
    let g = ArrayGeometry::new(nt, 1).expect("valid geometry");
    let (bfim, quad) =
        build_full_channel_bfim(&g, &vec![1.0; nt], 1, 1.0).expect("valid full-channel spec");
    let sc = IsacScenario::new(
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
    .expect("valid scenario");
    let equal = ComplexMatrix::identity(nt, nt).scale((p / nt as f64).sqrt());
    let at_equal = assemble_bfim(&bfim, &equal)
        .ok()
        .and_then(|j| bcrb_scalarize(&j, BcrbMode::Trace).ok())
        .unwrap_or(f64::NAN);
    let solved = build_sensing_design(&sc.metric, &sc, &Scalarization::Trace)
        .map_err(|e| e.to_string())
        .and_then(|b| {
            solve_and_extract(&b, &sc, &SolverOptions::default(), 1e-6).map_err(|e| e.to_string())
        });
    match solved {
        Ok((sol, _)) => {
            let err_sdp = (sol.objective - closed).abs() / closed;
            let err_eq = (at_equal - closed).abs() / closed;
            check(
                "closed_form_sdp",
                err_sdp <= SDP_TOL && err_eq <= INVERSE_TOL,
                format!(
                    "closed {closed:.9}, equal power {at_equal:.9}, solver {:.9}",
                    sol.objective
                ),
            )
        }
        Err(e) => check("closed_form_sdp", false, e),
    }
}

/// `embed(A)⁻¹ = embed(A⁻¹)` for random invertible complex `A`.
pub fn check_block_inverse(trials: usize) -> Check {
    let mut rng = trial_rng(11, 0);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let a = gaussian_matrix(&mut rng, 5, 5);
        let (Some(ai), Some(ei)) = (a.clone().try_inverse(), embed_complex(&a).try_inverse())
        else {
            return check("block_inverse", false, "singular draw".into());
        };
        let want = embed_complex(&ai);
        worst = worst.max((ei - &want).norm() / want.norm());
    }
    check(
        "block_inverse",
        worst <= INVERSE_TOL,
        format!("worst relative difference {worst:.2e} over {trials} draws"),
    )
}

/// Runs every analytic check.
pub fn verify_analytic() -> VerifyReport {
    VerifyReport {
        checks: vec![
            check_bound_table(),
            check_two_beams(8),
            check_full_channel_closed_form(20),
            check_full_channel_sdp(),
            check_block_inverse(20),
        ],
    }
}
