//! Random scenarios: targets on the Fourier grid, random priors and
//! Rayleigh user channels.

use std::f64::consts::TAU;

use isac_core::channel::{
    build_aoa_only_spec, build_full_channel_bfim, build_multitarget_bfim, ArrayGeometry,
    IsacScenario, QuadraticMetricSpec, Scalarization, SensingMetric, TargetPrior,
};
use isac_core::metrics::radar_snr_matrix;
use isac_core::numerics::{Complex, ComplexVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{ExperimentConfig, MetricChoice};
use crate::BenchError;

/// Random stream of trial `index`: the ChaCha stream number is the index,
/// so trials are independent of each other and of the thread schedule.
pub fn trial_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Angles `asin(2j/N)` for `j = −N/2+1, …, N/2` (`N` even) or
/// `j = −(N−1)/2, …, (N−1)/2` (`N` odd).
pub fn fourier_grid(n_tx: usize) -> Vec<f64> {
    let n = n_tx as i64;
    let lo = -(n - 1) / 2;
    (lo..lo + n)
        .map(|j| (2.0 * j as f64 / n_tx as f64).asin())
        .collect()
}

/// Grid angles usable as targets; endfire (`±90°`) is excluded since the
/// steering derivative vanishes there.
pub fn target_grid(n_tx: usize) -> Vec<f64> {
    fourier_grid(n_tx)
        .into_iter()
        .filter(|t| t.abs() < std::f64::consts::FRAC_PI_2 - 1e-9)
        .collect()
}

/// A drawn scenario and the priors it came from.
#[derive(Debug, Clone)]
pub struct RandomScenario {
    pub index: u64,
    pub scenario: IsacScenario,
    pub priors: Vec<TargetPrior>,
}

fn complex_gaussian(rng: &mut ChaCha8Rng, n: usize) -> ComplexVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexVector::from_fn(n, |_, _| {
        Complex::new(
            rng.sample::<f64, _>(StandardNormal) * s,
            rng.sample::<f64, _>(StandardNormal) * s,
        )
    })
}

/// Draws trial `index` of an experiment. Deterministic in
/// `(master_seed, index)`.
pub fn randomize_scenario(
    cfg: &ExperimentConfig,
    index: u64,
) -> Result<RandomScenario, BenchError> {
    let s = &cfg.scenario;
    let geometry = ArrayGeometry::new(cfg.geometry.n_tx, cfg.geometry.n_rx)?;
    let mut rng = trial_rng(cfg.run.master_seed, index);

    let n_targets = if s.metric == MetricChoice::FullChannel {
        0
    } else {
        s.n_targets
    };
    let grid = target_grid(cfg.geometry.n_tx);
    if n_targets > grid.len() {
        return Err(BenchError::GridExhausted {
            targets: n_targets,
            grid: grid.len(),
        });
    }
    let min_std = 0.5f64;
    let mut priors = Vec::with_capacity(n_targets);
    for j in sample(&mut rng, grid.len(), n_targets).into_iter() {
        let mag: f64 = rng.random_range(0.5..1.5);
        let phase: f64 = rng.random_range(0.0..TAU);
        let var: f64 = rng.random_range(0.1..1.0);
        let std_deg = if s.theta_max_deg > min_std {
            rng.random_range(min_std..s.theta_max_deg)
        } else {
            min_std
        };
        let mean = if s.metric == MetricChoice::AoaOnly {
            Complex::new(0.0, 0.0)
        } else {
            Complex::from_polar(mag, phase)
        };
        priors.push(TargetPrior::new(mean, var, grid[j], std_deg.to_radians())?);
    }

    let k = cfg.k();
    let channels: Vec<ComplexVector> = (0..k)
        .map(|_| complex_gaussian(&mut rng, cfg.geometry.n_tx))
        .collect();

    let metric = match s.metric {
        MetricChoice::Multitarget => {
            let (bfim, quad) = build_multitarget_bfim(
                &geometry,
                &priors,
                s.snapshots,
                s.noise_var,
                s.quadrature_nodes,
            )?;
            SensingMetric::Bfim { bfim, quad }
        }
        MetricChoice::AoaOnly => SensingMetric::AoaOnly(build_aoa_only_spec(
            &geometry,
            &priors,
            s.snapshots,
            s.noise_var,
            s.quadrature_nodes,
        )?),
        MetricChoice::FullChannel => {
            let vars = s.variance_profile.variances(geometry.n_tx * geometry.n_rx);
            let (bfim, quad) = build_full_channel_bfim(&geometry, &vars, s.snapshots, s.noise_var)?;
            SensingMetric::Bfim { bfim, quad }
        }
        MetricChoice::Snr => {
            let q = radar_snr_matrix(priors[0].theta_mean, &geometry);
            SensingMetric::Quadratic(QuadraticMetricSpec::new(
                vec![q],
                Scalarization::WeightedSum(vec![1.0]),
            )?)
        }
    };
    let gamma = 10f64.powf(s.sinr_target_db / 10.0);
    let scenario = IsacScenario::new(
        geometry,
        channels,
        vec![gamma; k],
        s.power_budget,
        s.noise_var,
        s.mode.interference(),
        metric,
    )?;
    Ok(RandomScenario {
        index,
        scenario,
        priors,
    })
}
