//! Performance functionals: SINR with and without sensing-interference
//! cancellation, radar SNR and SCNR, beam-pattern matching and BCRB
//! scalarizations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{steering_vector, ArrayGeometry, IsacScenario, Side};
use crate::numerics::{
    eig_hermitian, ComplexMatrix, ComplexVector, HermitianMatrix, NumericsError,
};

/// Errors raised while evaluating metrics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("invalid beamformer: {0}")]
    InvalidBeamformer(String),
    #[error("SCNR denominator is not positive")]
    DegenerateDenominator,
    #[error("BFIM is singular (min eigenvalue {min_eig:.3e})")]
    SingularBfim { min_eig: f64 },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Beamformers `V = [V_c V_s]`: the first `k_comm` columns serve the users,
/// the remaining columns are dedicated sensing beams.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerMatrix {
    columns: ComplexMatrix,
    k_comm: usize,
}

impl BeamformerMatrix {
    pub fn new(columns: ComplexMatrix, k_comm: usize) -> Result<Self, MetricsError> {
        if columns.nrows() == 0 {
            return Err(MetricsError::InvalidBeamformer(
                "no transmit antennas".into(),
            ));
        }
        if columns.ncols() < k_comm {
            return Err(MetricsError::InvalidBeamformer(format!(
                "{} columns cannot hold {k_comm} communication beams",
                columns.ncols()
            )));
        }
        if columns
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(MetricsError::InvalidBeamformer("non-finite entries".into()));
        }
        Ok(Self { columns, k_comm })
    }

    /// Concatenates communication and sensing columns.
    pub fn from_parts(comm: &ComplexMatrix, sensing: &ComplexMatrix) -> Result<Self, MetricsError> {
        let n = comm.nrows().max(sensing.nrows());
        let k = comm.ncols();
        let mut v = ComplexMatrix::zeros(n, k + sensing.ncols());
        if k > 0 {
            v.view_mut((0, 0), (n, k)).copy_from(comm);
        }
        if sensing.ncols() > 0 {
            v.view_mut((0, k), (n, sensing.ncols())).copy_from(sensing);
        }
        Self::new(v, k)
    }

    pub fn n_tx(&self) -> usize {
        self.columns.nrows()
    }

    /// Total number of beamformers `N`.
    pub fn n_beams(&self) -> usize {
        self.columns.ncols()
    }

    pub fn k_comm(&self) -> usize {
        self.k_comm
    }

    /// Number of sensing beams `N_s = N − K`.
    pub fn n_sensing(&self) -> usize {
        self.columns.ncols() - self.k_comm
    }

    pub fn columns(&self) -> &ComplexMatrix {
        &self.columns
    }

    /// Communication beam `v_k`.
    pub fn comm(&self, k: usize) -> ComplexVector {
        self.columns.column(k).into_owned()
    }

    /// Communication block `V_c`.
    pub fn comm_block(&self) -> ComplexMatrix {
        self.columns.columns(0, self.k_comm).into_owned()
    }

    /// Sensing block `V_s`.
    pub fn sensing(&self) -> ComplexMatrix {
        self.columns
            .columns(self.k_comm, self.n_sensing())
            .into_owned()
    }

    /// Transmit covariance `V V^H`.
    pub fn gram(&self) -> HermitianMatrix {
        HermitianMatrix::gram(&self.columns)
    }

    /// Total power `‖V‖_F²`.
    pub fn power(&self) -> f64 {
        self.columns.norm_squared()
    }

    /// Right-multiplies every column block by `u` (same `k_comm`).
    pub fn times(&self, u: &ComplexMatrix) -> Result<Self, MetricsError> {
        Self::new(&self.columns * u, self.k_comm)
    }
}

fn check_users(scenario: &IsacScenario, v: &BeamformerMatrix) {
    assert_eq!(
        v.k_comm(),
        scenario.k(),
        "beamformer must carry one column per user"
    );
    assert_eq!(
        v.n_tx(),
        scenario.geometry.n_tx,
        "beamformer rows must equal n_tx"
    );
}

fn useful_and_interference(scenario: &IsacScenario, v: &BeamformerMatrix) -> Vec<(f64, f64, f64)> {
    check_users(scenario, v);
    let k = scenario.k();
    let cols = v.columns();
    scenario
        .channels
        .iter()
        .enumerate()
        .map(|(u, h)| {
            let gains: Vec<f64> = (0..cols.ncols())
                .map(|c| h.dotc(&cols.column(c)).norm_sqr())
                .collect();
            let useful = gains[u];
            let comm_interf: f64 = (0..k).filter(|&i| i != u).map(|i| gains[i]).sum();
            let sensing: f64 = gains[k..].iter().sum();
            (useful, comm_interf, sensing)
        })
        .collect()
}

/// SINR when users cancel sensing interference.
pub fn sinr_ic(scenario: &IsacScenario, v: &BeamformerMatrix) -> Vec<f64> {
    useful_and_interference(scenario, v)
        .into_iter()
        .map(|(s, i, _)| s / (i + scenario.noise_var))
        .collect()
}

/// SINR when sensing beams are additional interference.
pub fn sinr_nic(scenario: &IsacScenario, v: &BeamformerMatrix) -> Vec<f64> {
    useful_and_interference(scenario, v)
        .into_iter()
        .map(|(s, i, l)| s / (i + l + scenario.noise_var))
        .collect()
}

/// SINR under the scenario's interference mode.
pub fn sinr(scenario: &IsacScenario, v: &BeamformerMatrix) -> Vec<f64> {
    match scenario.interference_mode {
        crate::channel::InterferenceMode::Ic => sinr_ic(scenario, v),
        crate::channel::InterferenceMode::Nic => sinr_nic(scenario, v),
    }
}

/// Radar SNR `Υ·Tr(A^H A V V^H)/σ²` toward `theta0`, `A = a_R a_T^H`.
pub fn radar_snr(
    theta0: f64,
    geometry: &ArrayGeometry,
    v: &ComplexMatrix,
    snapshots: usize,
    noise_var: f64,
) -> f64 {
    let at = steering_vector(geometry, theta0, Side::Tx);
    let ar = steering_vector(geometry, theta0, Side::Rx);
    let beam = (at.adjoint() * v).norm_squared();
    snapshots as f64 * ar.norm_squared() * beam / noise_var
}

/// Quadratic matrix of the radar SNR, `A^H A` (so the SNR is
/// `(Υ/σ²)·Tr(Q V V^H)`).
pub fn radar_snr_matrix(theta0: f64, geometry: &ArrayGeometry) -> HermitianMatrix {
    let at = steering_vector(geometry, theta0, Side::Tx);
    let ar = steering_vector(geometry, theta0, Side::Rx);
    HermitianMatrix::outer(&at).scale(ar.norm_squared())
}

/// Inputs of the signal-to-clutter-plus-noise ratio for a fixed combiner `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScnrSpec {
    /// `A^H W^H W A`.
    pub target_gram: HermitianMatrix,
    /// `E[B^H W^H W B]`.
    pub clutter_gram: HermitianMatrix,
    /// `Tr(W^H W)`.
    pub combiner_power: f64,
    pub snapshots: usize,
    pub noise_var: f64,
}

impl ScnrSpec {
    pub fn new(
        target_gram: HermitianMatrix,
        clutter_gram: HermitianMatrix,
        combiner_power: f64,
        snapshots: usize,
        noise_var: f64,
    ) -> Result<Self, MetricsError> {
        if target_gram.dim() != clutter_gram.dim() {
            return Err(MetricsError::InvalidSpec("Gram sizes differ".into()));
        }
        for g in [&target_gram, &clutter_gram] {
            let eig = eig_hermitian(g)?;
            if eig.eigenvalues[0] < -1e-9 * eig.spectral_norm().max(1.0) {
                return Err(MetricsError::InvalidSpec(
                    "Gram matrices must be PSD".into(),
                ));
            }
        }
        if !(combiner_power > 0.0) || snapshots == 0 || !(noise_var > 0.0) {
            return Err(MetricsError::InvalidSpec(
                "combiner power, snapshots and noise variance must be positive".into(),
            ));
        }
        Ok(Self {
            target_gram,
            clutter_gram,
            combiner_power,
            snapshots,
            noise_var,
        })
    }

    /// Single-quadratic form of the constraint `SCNR(V) = c`:
    /// `Tr(Q V V^H) = σ²·Tr(W^H W)` with `Q = (Υ/c)·A^H W^H W A − Υ·E[B^H W^H W B]`.
    pub fn single_quadratic(&self, level: f64) -> Result<(HermitianMatrix, f64), MetricsError> {
        if !(level > 0.0) {
            return Err(MetricsError::InvalidSpec(
                "SCNR level must be positive".into(),
            ));
        }
        let u = self.snapshots as f64;
        let q = self
            .target_gram
            .scale(u / level)
            .sub(&self.clutter_gram.scale(u));
        Ok((q, self.noise_var * self.combiner_power))
    }
}

/// `Υ Tr(A^H W^H W A R) / (Υ Tr(E[B^H W^H W B] R) + σ² Tr(W^H W))`.
pub fn radar_scnr(spec: &ScnrSpec, v: &ComplexMatrix) -> Result<f64, MetricsError> {
    let r = HermitianMatrix::gram(v);
    let u = spec.snapshots as f64;
    let num = u * spec.target_gram.inner(&r);
    let den = u * spec.clutter_gram.inner(&r) + spec.noise_var * spec.combiner_power;
    if !(den > 0.0) {
        return Err(MetricsError::DegenerateDenominator);
    }
    Ok(num / den)
}

/// Beam-pattern matching inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPatternSpec {
    pub grid_angles: Vec<f64>,
    pub desired: Vec<f64>,
    pub crosscorr_angles: Vec<f64>,
    pub weight: f64,
}

impl BeamPatternSpec {
    pub fn new(
        grid_angles: Vec<f64>,
        desired: Vec<f64>,
        crosscorr_angles: Vec<f64>,
        weight: f64,
    ) -> Result<Self, MetricsError> {
        if grid_angles.is_empty() || grid_angles.len() != desired.len() {
            return Err(MetricsError::InvalidSpec(
                "grid must be non-empty and match the desired pattern".into(),
            ));
        }
        if desired.iter().any(|&d| !(d >= 0.0)) || !(weight >= 0.0) {
            return Err(MetricsError::InvalidSpec(
                "desired levels and weight must be nonnegative".into(),
            ));
        }
        Ok(Self {
            grid_angles,
            desired,
            crosscorr_angles,
            weight,
        })
    }

    /// Quadratic matrices `a(θ_n) a(θ_n)^H` of the pattern samples.
    pub fn quad_matrices(&self, geometry: &ArrayGeometry) -> Vec<HermitianMatrix> {
        self.grid_angles
            .iter()
            .map(|&t| HermitianMatrix::outer(&steering_vector(geometry, t, Side::Tx)))
            .collect()
    }
}

/// `Σ_n |a^H(θ_n) R a(θ_n) − d_n|² + w_c Σ_{p<q} |a^H(θ_p) R a(θ_q)|²`.
///
/// Each unordered pair of cross-correlation angles is counted once.
pub fn beam_pattern_objective(
    spec: &BeamPatternSpec,
    geometry: &ArrayGeometry,
    v: &ComplexMatrix,
) -> f64 {
    let r = HermitianMatrix::gram(v);
    let a = |t: f64| steering_vector(geometry, t, Side::Tx);
    let mismatch: f64 = spec
        .grid_angles
        .iter()
        .zip(&spec.desired)
        .map(|(&t, &d)| (r.quad_form(&a(t)) - d).powi(2))
        .sum();
    let mut cross = 0.0;
    let cc: Vec<ComplexVector> = spec.crosscorr_angles.iter().map(|&t| a(t)).collect();
    for p in 0..cc.len() {
        for q in (p + 1)..cc.len() {
            cross += (cc[p].adjoint() * r.matrix() * &cc[q])[(0, 0)].norm_sqr();
        }
    }
    mismatch + spec.weight * cross
}

/// BCRB scalarizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BcrbMode {
    Trace,
    MaxDiag,
    LogDet,
}

/// `Tr(J⁻¹)`, `max_i [J⁻¹]_ii` or `−log det J`.
pub fn bcrb_scalarize(j: &HermitianMatrix, mode: BcrbMode) -> Result<f64, MetricsError> {
    let eig = eig_hermitian(j)?;
    let min = eig.eigenvalues[0];
    if !(min > 1e-12) {
        return Err(MetricsError::SingularBfim { min_eig: min });
    }
    Ok(match mode {
        BcrbMode::LogDet => -eig.eigenvalues.iter().map(|l| l.ln()).sum::<f64>(),
        BcrbMode::Trace => eig.eigenvalues.iter().map(|l| 1.0 / l).sum(),
        BcrbMode::MaxDiag => {
            let inv = eig.reassemble_with(|l| 1.0 / l);
            (0..j.dim())
                .map(|i| inv.matrix()[(i, i)].re)
                .fold(f64::NEG_INFINITY, f64::max)
        }
    })
}
