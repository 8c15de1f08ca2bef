//! Scenario builders and independent constraint oracles shared by the
//! integration tests.
#![allow(dead_code)]

use isac_core::channel::{
    build_multitarget_bfim, ArrayGeometry, InterferenceMode, IsacScenario, QuadraticMetricSpec,
    Scalarization, SensingMetric, TargetPrior,
};
use isac_core::metrics::BeamformerMatrix;
use isac_core::numerics::{Complex, ComplexMatrix, ComplexVector, HermitianMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn c(re: f64, im: f64) -> Complex {
    Complex::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> ComplexVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexVector::from_fn(n, |_, _| {
        c(
            rng.sample::<f64, _>(StandardNormal) * s,
            rng.sample::<f64, _>(StandardNormal) * s,
        )
    })
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_fn(n, m, |_, _| {
        c(
            rng.sample::<f64, _>(StandardNormal) * s,
            rng.sample::<f64, _>(StandardNormal) * s,
        )
    })
}

/// Fourier-grid targets with random priors.
pub fn multitarget_scenario(
    seed: u64,
    n_tx: usize,
    k: usize,
    n_targets: usize,
    mode: InterferenceMode,
) -> IsacScenario {
    let mut r = rng(seed);
    let g = ArrayGeometry::new(n_tx, n_tx).unwrap();
    let grid: Vec<f64> = (-(n_tx as i64) / 2 + 1..(n_tx as i64) / 2)
        .map(|j| (2.0 * j as f64 / n_tx as f64).asin())
        .collect();
    let start = r.random_range(0..grid.len());
    let priors: Vec<TargetPrior> = (0..n_targets)
        .map(|t| {
            let theta = grid[(start + 3 * t) % grid.len()];
            let mag = r.random_range(0.5..1.5);
            let ph = r.random_range(0.0..std::f64::consts::TAU);
            let var = r.random_range(0.1..1.0);
            let std = r.random_range(0.5..5.0_f64).to_radians();
            TargetPrior::new(Complex::from_polar(mag, ph), var, theta, std).unwrap()
        })
        .collect();
    let (bfim, quad) = build_multitarget_bfim(&g, &priors, 10, 1.0, 15).unwrap();
    let h = (0..k).map(|_| gaussian_vector(&mut r, n_tx)).collect();
    IsacScenario::new(
        g,
        h,
        vec![10f64.powf(0.5); k],
        10.0,
        1.0,
        mode,
        SensingMetric::Bfim { bfim, quad },
    )
    .unwrap()
}

/// Scenario with a single quadratic (SNR-like) metric `Q = a a^H`.
pub fn snr_scenario(seed: u64, n_tx: usize, k: usize, mode: InterferenceMode) -> IsacScenario {
    let mut r = rng(seed);
    let a = gaussian_vector(&mut r, n_tx);
    let q = QuadraticMetricSpec::new(
        vec![HermitianMatrix::outer(&a)],
        Scalarization::WeightedSum(vec![1.0]),
    )
    .unwrap();
    let h = (0..k).map(|_| gaussian_vector(&mut r, n_tx)).collect();
    let g = ArrayGeometry::new(n_tx, 1).unwrap();
    IsacScenario::new(
        g,
        h,
        vec![2.0; k],
        10.0,
        1.0,
        mode,
        SensingMetric::Quadratic(q),
    )
    .unwrap()
}

/// `Tr(Q V V^H) = Σ_n v_n^H Q v_n`, column by column.
pub fn quad_value(q: &HermitianMatrix, v: &ComplexMatrix) -> f64 {
    v.column_iter()
        .map(|col| (col.adjoint() * q.matrix() * col)[(0, 0)].re)
        .sum()
}

/// SINR of user `u` from the raw columns, with or without the sensing beams
/// as interference.
pub fn sinr_oracle(s: &IsacScenario, v: &BeamformerMatrix, u: usize, count_sensing: bool) -> f64 {
    let h = &s.channels[u];
    let k = s.k();
    let cols = v.columns();
    let mut interf = s.noise_var;
    for n in 0..cols.ncols() {
        if n == u || (n >= k && !count_sensing) {
            continue;
        }
        let g: Complex = h
            .iter()
            .zip(cols.column(n).iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        interf += g.norm_sqr();
    }
    let g: Complex = h
        .iter()
        .zip(cols.column(u).iter())
        .map(|(a, b)| a.conj() * b)
        .sum();
    g.norm_sqr() / interf
}

pub fn power_oracle(v: &ComplexMatrix) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}
