//! Steering vectors, sensing channel models and Bayesian Fisher information
//! specifications.
//!
//! A BFIM specification stores the prior information matrix `C` and the
//! quadratic matrices `G̃_ij` so that `J(V) = C + (Υ/σ²)·[Tr(G̃_ij V V^H)]_ij`.
//! The matching [`QuadraticMetricSpec`] lists only the structurally distinct
//! matrices, which is what the beamformer-count bounds depend on.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    eig_symmetric, Complex, ComplexMatrix, ComplexVector, HermitianMatrix, NumericsError,
    RealMatrix, RealVector,
};

/// Errors raised while building channel and metric specifications.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("Gauss-Hermite rule with {nodes} nodes is degenerate")]
    QuadratureUnderflow { nodes: usize },
    #[error("target {index} has nonzero mean path loss")]
    NonzeroMean { index: usize },
    #[error("trace term ({i},{j}) has imaginary part {imag:.3e}")]
    ImaginaryResidue { i: usize, j: usize, imag: f64 },
    #[error("quadratic matrices are linearly dependent (singular value ratio {ratio:.3e})")]
    LinearlyDependent { ratio: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Uniform linear arrays at the transmitter and the sensing receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_tx: usize,
    pub n_rx: usize,
    pub spacing_wavelengths: f64,
}

impl ArrayGeometry {
    /// Half-wavelength arrays.
    pub fn new(n_tx: usize, n_rx: usize) -> Result<Self, ChannelError> {
        Self::with_spacing(n_tx, n_rx, 0.5)
    }

    pub fn with_spacing(
        n_tx: usize,
        n_rx: usize,
        spacing_wavelengths: f64,
    ) -> Result<Self, ChannelError> {
        if n_tx == 0 || n_rx == 0 {
            return Err(ChannelError::InvalidInput(
                "array sizes must be positive".into(),
            ));
        }
        if !(spacing_wavelengths > 0.0) {
            return Err(ChannelError::InvalidInput(
                "element spacing must be positive".into(),
            ));
        }
        Ok(Self {
            n_tx,
            n_rx,
            spacing_wavelengths,
        })
    }

    fn size(&self, side: Side) -> usize {
        match side {
            Side::Tx => self.n_tx,
            Side::Rx => self.n_rx,
        }
    }
}

/// Which array a steering vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Tx,
    Rx,
}

fn centered_phase(geometry: &ArrayGeometry, n: usize, len: usize) -> f64 {
    2.0 * PI * geometry.spacing_wavelengths * (n as f64 - (len as f64 - 1.0) / 2.0)
}

/// Center-referenced, unit-norm ULA response toward `theta`.
///
/// Element `n` has phase `2π·spacing·(n − (N−1)/2)·sin θ`. The formula is
/// valid for every real `theta`; angles of interest satisfy `|θ| < π/2`.
pub fn steering_vector(geometry: &ArrayGeometry, theta: f64, side: Side) -> ComplexVector {
    let len = geometry.size(side);
    let amp = 1.0 / (len as f64).sqrt();
    let s = theta.sin();
    ComplexVector::from_fn(len, |n, _| {
        Complex::from_polar(amp, centered_phase(geometry, n, len) * s)
    })
}

/// Derivative of [`steering_vector`] with respect to `theta`.
pub fn steering_derivative(geometry: &ArrayGeometry, theta: f64, side: Side) -> ComplexVector {
    let len = geometry.size(side);
    let a = steering_vector(geometry, theta, side);
    let c = theta.cos();
    ComplexVector::from_fn(len, |n, _| {
        Complex::new(0.0, centered_phase(geometry, n, len) * c) * a[n]
    })
}

/// Two-way array response `A(θ) = a_R(θ) a_T(θ)^H` (`n_rx × n_tx`).
pub fn array_response(geometry: &ArrayGeometry, theta: f64) -> ComplexMatrix {
    steering_vector(geometry, theta, Side::Rx)
        * steering_vector(geometry, theta, Side::Tx).adjoint()
}

/// Derivative `Ȧ(θ) = ȧ_R a_T^H + a_R ȧ_T^H`.
pub fn array_response_derivative(geometry: &ArrayGeometry, theta: f64) -> ComplexMatrix {
    let ar = steering_vector(geometry, theta, Side::Rx);
    let at = steering_vector(geometry, theta, Side::Tx);
    let dr = steering_derivative(geometry, theta, Side::Rx);
    let dt = steering_derivative(geometry, theta, Side::Tx);
    &dr * at.adjoint() + &ar * dt.adjoint()
}

/// Gaussian priors of one point target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPrior {
    /// Mean of the complex path loss.
    pub alpha_mean: Complex,
    /// Variance of the circularly symmetric path loss.
    pub alpha_var: f64,
    /// Mean angle in radians.
    pub theta_mean: f64,
    /// Angle standard deviation in radians.
    pub theta_std: f64,
}

impl TargetPrior {
    pub fn new(
        alpha_mean: Complex,
        alpha_var: f64,
        theta_mean: f64,
        theta_std: f64,
    ) -> Result<Self, ChannelError> {
        let p = Self {
            alpha_mean,
            alpha_var,
            theta_mean,
            theta_std,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.alpha_var > 0.0) {
            return Err(ChannelError::InvalidInput(
                "alpha_var must be positive".into(),
            ));
        }
        if !(self.theta_std > 0.0 && self.theta_std < PI / 2.0) {
            return Err(ChannelError::InvalidInput(
                "theta_std must lie in (0, pi/2)".into(),
            ));
        }
        if !(self.theta_mean.abs() < PI / 2.0) {
            return Err(ChannelError::InvalidInput(
                "|theta_mean| must be below pi/2".into(),
            ));
        }
        Ok(())
    }
}

/// How expectations over Gaussian angle priors are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleExpectation {
    /// Gauss-Hermite rule with the given number of nodes.
    GaussHermite(usize),
    /// Seeded Monte-Carlo average, for non-Gaussian extensions.
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for AngleExpectation {
    fn default() -> Self {
        Self::GaussHermite(DEFAULT_QUADRATURE_NODES)
    }
}

/// Default number of Gauss-Hermite nodes per angle.
pub const DEFAULT_QUADRATURE_NODES: usize = 15;

/// Gauss-Hermite nodes and weights for `∫ e^{-x²} f(x) dx` (Golub-Welsch).
pub fn gauss_hermite(nodes: usize) -> Result<(Vec<f64>, Vec<f64>), ChannelError> {
    if nodes == 0 {
        return Err(ChannelError::QuadratureUnderflow { nodes });
    }
    let mut jac = RealMatrix::zeros(nodes, nodes);
    for k in 1..nodes {
        let b = (k as f64 / 2.0).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let (x, v) = eig_symmetric(&jac)?;
    let sqrt_pi = PI.sqrt();
    let w: Vec<f64> = (0..nodes)
        .map(|k| sqrt_pi * v[(0, k)] * v[(0, k)])
        .collect();
    let total: f64 = w.iter().sum();
    if w.iter().any(|&wk| !(wk > 0.0) || !wk.is_finite()) || (total - sqrt_pi).abs() > 1e-10 {
        return Err(ChannelError::QuadratureUnderflow { nodes });
    }
    Ok((x, w))
}

/// Sample points and probability weights approximating `θ ~ N(mean, std²)`.
pub fn angle_rule(
    mean: f64,
    std: f64,
    rule: AngleExpectation,
) -> Result<Vec<(f64, f64)>, ChannelError> {
    match rule {
        AngleExpectation::GaussHermite(n) => {
            let (x, w) = gauss_hermite(n)?;
            let norm = PI.sqrt();
            Ok(x.iter()
                .zip(&w)
                .map(|(&xk, &wk)| (mean + std::f64::consts::SQRT_2 * std * xk, wk / norm))
                .collect())
        }
        AngleExpectation::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(ChannelError::InvalidInput(
                    "Monte-Carlo expectation needs samples".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = 1.0 / samples as f64;
            Ok((0..samples)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (mean + std * z, w)
                })
                .collect())
        }
    }
}

/// How a metric is reduced to a scalar objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Scalarization {
    /// Trace of the BCRB matrix.
    Trace,
    /// Largest diagonal entry of the BCRB matrix.
    MaxDiag,
    /// Negative log-determinant of the BFIM.
    LogDet,
    /// Weighted sum of the quadratic values, to be maximized.
    WeightedSum(Vec<f64>),
    /// Opaque user-defined function of the quadratic values.
    Custom(String),
}

/// A d-quadratic sensing metric: the metric depends on `V` only through
/// `Tr(Q_i V V^H)`, `i = 1..d`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticMetricSpec {
    q_matrices: Vec<HermitianMatrix>,
    pub scalarization: Scalarization,
}

impl QuadraticMetricSpec {
    /// Validating constructor: rejects empty, mis-sized or linearly dependent
    /// lists.
    pub fn new(
        q_matrices: Vec<HermitianMatrix>,
        scalarization: Scalarization,
    ) -> Result<Self, ChannelError> {
        let spec = Self::structural(q_matrices, scalarization)?;
        let ratio = spec.independence_ratio()?;
        if ratio <= 1e-8 {
            return Err(ChannelError::LinearlyDependent { ratio });
        }
        Ok(spec)
    }

    /// Constructor used when distinctness is guaranteed by construction; the
    /// numerical independence check is left to [`Self::independence_ratio`].
    pub fn structural(
        q_matrices: Vec<HermitianMatrix>,
        scalarization: Scalarization,
    ) -> Result<Self, ChannelError> {
        if q_matrices.is_empty() {
            return Err(ChannelError::InvalidInput(
                "a quadratic metric needs d >= 1".into(),
            ));
        }
        let n = q_matrices[0].dim();
        if q_matrices.iter().any(|q| q.dim() != n) {
            return Err(ChannelError::InvalidInput(
                "quadratic matrices differ in size".into(),
            ));
        }
        Ok(Self {
            q_matrices,
            scalarization,
        })
    }

    pub fn d(&self) -> usize {
        self.q_matrices.len()
    }

    pub fn n_tx(&self) -> usize {
        self.q_matrices[0].dim()
    }

    pub fn q_matrices(&self) -> &[HermitianMatrix] {
        &self.q_matrices
    }

    /// Values `Tr(Q_i R)`.
    pub fn values_of_gram(&self, r: &HermitianMatrix) -> Vec<f64> {
        self.q_matrices.iter().map(|q| q.inner(r)).collect()
    }

    /// Ratio of smallest to largest singular value of the stacked
    /// vectorized matrices (0 when `d` exceeds the real dimension `n²`).
    pub fn independence_ratio(&self) -> Result<f64, ChannelError> {
        let n = self.n_tx();
        let d = self.d();
        if d > n * n {
            return Ok(0.0);
        }
        let mut m = RealMatrix::zeros(d, n * n);
        for (i, q) in self.q_matrices.iter().enumerate() {
            let v = hermitian_coords(q);
            m.set_row(i, &v.transpose());
        }
        let s = m.singular_values();
        let max = s.iter().fold(0.0_f64, |a, &x| a.max(x));
        let min = s.iter().fold(f64::INFINITY, |a, &x| a.min(x));
        Ok(if max > 0.0 { min / max } else { 0.0 })
    }
}

/// Orthonormal real coordinates of a Hermitian matrix: diagonal entries,
/// then `√2·Re` and `√2·Im` of the strictly upper entries, so that the
/// Euclidean inner product of coordinates equals `Re Tr(A B)`.
pub fn hermitian_coords(a: &HermitianMatrix) -> RealVector {
    let n = a.dim();
    let m = a.matrix();
    let mut v = RealVector::zeros(n * n);
    for i in 0..n {
        v[i] = m[(i, i)].re;
    }
    let mut k = n;
    let r2 = std::f64::consts::SQRT_2;
    for i in 0..n {
        for j in (i + 1)..n {
            v[k] = r2 * m[(i, j)].re;
            v[k + 1] = r2 * m[(i, j)].im;
            k += 2;
        }
    }
    v
}

/// Inverse of [`hermitian_coords`].
pub fn hermitian_from_coords(v: &[f64], n: usize) -> HermitianMatrix {
    let mut m = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = Complex::new(v[i], 0.0);
    }
    let mut k = n;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in (i + 1)..n {
            let z = Complex::new(s * v[k], s * v[k + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    HermitianMatrix::symmetrize(m)
}

/// Bayesian Fisher information specification `J(V) = C + T(V V^H)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BfimSpec {
    prior_matrix: HermitianMatrix,
    quad_matrices: Vec<HermitianMatrix>,
    pub snapshots: usize,
    pub noise_var: f64,
    n_params: usize,
}

impl BfimSpec {
    pub fn new(
        prior_matrix: HermitianMatrix,
        quad_matrices: Vec<HermitianMatrix>,
        snapshots: usize,
        noise_var: f64,
    ) -> Result<Self, ChannelError> {
        let l = prior_matrix.dim();
        if quad_matrices.len() != l * (l + 1) / 2 {
            return Err(ChannelError::InvalidInput(format!(
                "expected {} quadratic matrices for L = {l}, got {}",
                l * (l + 1) / 2,
                quad_matrices.len()
            )));
        }
        if snapshots == 0 || !(noise_var > 0.0) {
            return Err(ChannelError::InvalidInput(
                "snapshots and noise variance must be positive".into(),
            ));
        }
        if prior_matrix.max_imag() > 1e-12 {
            return Err(ChannelError::InvalidInput(
                "prior matrix must be real".into(),
            ));
        }
        let eig = crate::numerics::eig_hermitian(&prior_matrix)?;
        if eig.eigenvalues[0] < -1e-9 * eig.spectral_norm().max(1.0) {
            return Err(ChannelError::InvalidInput(
                "prior matrix must be PSD".into(),
            ));
        }
        Ok(Self {
            prior_matrix,
            quad_matrices,
            snapshots,
            noise_var,
            n_params: l,
        })
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn n_tx(&self) -> usize {
        self.quad_matrices[0].dim()
    }

    pub fn prior_matrix(&self) -> &HermitianMatrix {
        &self.prior_matrix
    }

    /// `G̃_ij` for `i ≤ j` (either order accepted).
    pub fn quad(&self, i: usize, j: usize) -> &HermitianMatrix {
        &self.quad_matrices[upper_index(i, j, self.n_params)]
    }

    pub fn quad_matrices(&self) -> &[HermitianMatrix] {
        &self.quad_matrices
    }

    /// `Υ/σ²`.
    pub fn gain(&self) -> f64 {
        self.snapshots as f64 / self.noise_var
    }

    /// Same specification with a different number of snapshots.
    pub fn with_snapshots(&self, snapshots: usize) -> Self {
        Self {
            snapshots,
            ..self.clone()
        }
    }
}

/// Index of `(i, j)` with `i ≤ j` in the row-major upper triangle of an
/// `l × l` matrix.
pub fn upper_index(i: usize, j: usize, l: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * l - i + 1) / 2 + (j - i)
}

/// Assembles `J = C + T_V` with `[T_V]_ij = (Υ/σ²) Tr(G̃_ij V V^H)`.
pub fn assemble_bfim(spec: &BfimSpec, v: &ComplexMatrix) -> Result<HermitianMatrix, ChannelError> {
    if v.nrows() != spec.n_tx() {
        return Err(ChannelError::InvalidInput(format!(
            "beamformer has {} rows, metric expects {}",
            v.nrows(),
            spec.n_tx()
        )));
    }
    assemble_bfim_from_gram(spec, &HermitianMatrix::gram(v))
}

/// [`assemble_bfim`] from a transmit covariance `R = V V^H`.
pub fn assemble_bfim_from_gram(
    spec: &BfimSpec,
    r: &HermitianMatrix,
) -> Result<HermitianMatrix, ChannelError> {
    let l = spec.n_params;
    let g = spec.gain();
    let mut j_mat = spec.prior_matrix.real_part();
    for i in 0..l {
        for k in i..l {
            let t = spec.quad(i, k).trace_with(r.matrix());
            if t.im.abs() > 1e-8 * t.re.abs().max(1.0) {
                return Err(ChannelError::ImaginaryResidue {
                    i,
                    j: k,
                    imag: t.im,
                });
            }
            j_mat[(i, k)] += g * t.re;
            if i != k {
                j_mat[(k, i)] += g * t.re;
            }
        }
    }
    Ok(HermitianMatrix::from_real(&j_mat))
}

fn herm(m: ComplexMatrix) -> HermitianMatrix {
    HermitianMatrix::symmetrize(m)
}

fn unit(n: usize, i: usize) -> ComplexVector {
    let mut e = ComplexVector::zeros(n);
    e[i] = Complex::new(1.0, 0.0);
    e
}

/// Canonical Hermitian basis of `n × n` matrices: `e_i e_i^H`, then for each
/// pair `i < j` the matrices `e_i e_j^H + e_j e_i^H` and `j(e_i e_j^H − e_j e_i^H)`.
pub fn canonical_hermitian_basis(n: usize) -> Vec<HermitianMatrix> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push(HermitianMatrix::outer(&unit(n, i)));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(herm(sym_pair(n, i, j)));
            out.push(herm(antisym_pair(n, i, j)));
        }
    }
    out
}

fn sym_pair(n: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n, n);
    m[(i, j)] += Complex::new(1.0, 0.0);
    m[(j, i)] += Complex::new(1.0, 0.0);
    m
}

fn antisym_pair(n: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n, n);
    m[(i, j)] += Complex::new(0.0, 1.0);
    m[(j, i)] -= Complex::new(0.0, 1.0);
    m
}

/// BFIM of the full channel matrix `G` (all `n_rx × n_tx` entries unknown).
///
/// Parameters are ordered per receive row `r` as `[Re g_r; Im g_r]`, so
/// `L = 2·n_tx·n_rx`. `prior_var_per_entry[r·n_tx + i]` is the variance of
/// each real component of entry `(r, i)`; the prior information is its
/// reciprocal.
pub fn build_full_channel_bfim(
    geometry: &ArrayGeometry,
    prior_var_per_entry: &[f64],
    snapshots: usize,
    noise_var: f64,
) -> Result<(BfimSpec, QuadraticMetricSpec), ChannelError> {
    let n = geometry.n_tx;
    let nr = geometry.n_rx;
    if prior_var_per_entry.len() != n * nr {
        return Err(ChannelError::InvalidInput(format!(
            "expected {} prior variances, got {}",
            n * nr,
            prior_var_per_entry.len()
        )));
    }
    if prior_var_per_entry.iter().any(|&v| !(v > 0.0)) {
        return Err(ChannelError::InvalidInput(
            "prior variances must be positive".into(),
        ));
    }
    let l = 2 * n * nr;
    let mut c = RealMatrix::zeros(l, l);
    for r in 0..nr {
        for i in 0..n {
            let info = 1.0 / prior_var_per_entry[r * n + i];
            c[(r * 2 * n + i, r * 2 * n + i)] = info;
            c[(r * 2 * n + n + i, r * 2 * n + n + i)] = info;
        }
    }
    let zero = HermitianMatrix::zeros(n);
    let mut quads = Vec::with_capacity(l * (l + 1) / 2);
    for p in 0..l {
        for q in p..l {
            let (rp, ip) = (p / (2 * n), p % (2 * n));
            let (rq, iq) = (q / (2 * n), q % (2 * n));
            if rp != rq {
                quads.push(zero.clone());
                continue;
            }
            let (p_im, pi) = (ip >= n, ip % n);
            let (q_im, qi) = (iq >= n, iq % n);
            let m = match (p_im, q_im) {
                (false, false) | (true, true) => sym_pair(n, pi, qi),
                (false, true) => antisym_pair(n, pi, qi),
                (true, false) => antisym_pair(n, qi, pi),
            };
            quads.push(herm(m));
        }
    }
    let bfim = BfimSpec::new(HermitianMatrix::from_real(&c), quads, snapshots, noise_var)?;
    let metric =
        QuadraticMetricSpec::structural(canonical_hermitian_basis(n), Scalarization::MaxDiag)?;
    Ok((bfim, metric))
}

/// Per-target angle expectations of the array response and its derivative.
struct TargetMoments {
    mean_a: ComplexMatrix,
    mean_ad: ComplexMatrix,
    a_a: ComplexMatrix,
    a_ad: ComplexMatrix,
    ad_ad: ComplexMatrix,
}

fn target_moments(
    geometry: &ArrayGeometry,
    prior: &TargetPrior,
    rule: AngleExpectation,
) -> Result<TargetMoments, ChannelError> {
    let (nr, nt) = (geometry.n_rx, geometry.n_tx);
    let mut m = TargetMoments {
        mean_a: ComplexMatrix::zeros(nr, nt),
        mean_ad: ComplexMatrix::zeros(nr, nt),
        a_a: ComplexMatrix::zeros(nt, nt),
        a_ad: ComplexMatrix::zeros(nt, nt),
        ad_ad: ComplexMatrix::zeros(nt, nt),
    };
    for (theta, w) in angle_rule(prior.theta_mean, prior.theta_std, rule)? {
        let a = array_response(geometry, theta);
        let ad = array_response_derivative(geometry, theta);
        let ah = a.adjoint();
        m.a_a += (&ah * &a).scale(w);
        m.a_ad += (&ah * &ad).scale(w);
        m.ad_ad += (ad.adjoint() * &ad).scale(w);
        m.mean_a += a.scale(w);
        m.mean_ad += ad.scale(w);
    }
    Ok(m)
}

/// Expectations `E[A_i^H A_j]`, `E[A_i^H Ȧ_j]`, `E[Ȧ_i^H Ȧ_j]` for
/// independent angle priors.
struct PairMoments<'a> {
    t: &'a [TargetMoments],
}

impl PairMoments<'_> {
    fn a_a(&self, i: usize, j: usize) -> ComplexMatrix {
        if i == j {
            self.t[i].a_a.clone()
        } else {
            self.t[i].mean_a.adjoint() * &self.t[j].mean_a
        }
    }
    fn a_ad(&self, i: usize, j: usize) -> ComplexMatrix {
        if i == j {
            self.t[i].a_ad.clone()
        } else {
            self.t[i].mean_a.adjoint() * &self.t[j].mean_ad
        }
    }
    fn ad_ad(&self, i: usize, j: usize) -> ComplexMatrix {
        if i == j {
            self.t[i].ad_ad.clone()
        } else {
            self.t[i].mean_ad.adjoint() * &self.t[j].mean_ad
        }
    }
}

fn plus_adjoint(x: &ComplexMatrix, coef: Complex) -> HermitianMatrix {
    let y = x.map(|z| z * coef);
    let yh = y.adjoint();
    HermitianMatrix::symmetrize(y + yh)
}

/// BFIM of `N_tr` line-of-sight point targets with parameters
/// `η = [Re α; Im α; θ]` (`L = 3·N_tr`).
pub fn build_multitarget_bfim(
    geometry: &ArrayGeometry,
    priors: &[TargetPrior],
    snapshots: usize,
    noise_var: f64,
    quadrature_nodes: usize,
) -> Result<(BfimSpec, QuadraticMetricSpec), ChannelError> {
    build_multitarget_bfim_with(
        geometry,
        priors,
        snapshots,
        noise_var,
        AngleExpectation::GaussHermite(quadrature_nodes),
    )
}

/// [`build_multitarget_bfim`] with an explicit expectation rule.
pub fn build_multitarget_bfim_with(
    geometry: &ArrayGeometry,
    priors: &[TargetPrior],
    snapshots: usize,
    noise_var: f64,
    rule: AngleExpectation,
) -> Result<(BfimSpec, QuadraticMetricSpec), ChannelError> {
    if priors.is_empty() {
        return Err(ChannelError::InvalidInput(
            "at least one target is required".into(),
        ));
    }
    for p in priors {
        p.validate()?;
    }
    let nt = priors.len();
    let l = 3 * nt;
    let moments = priors
        .iter()
        .map(|p| target_moments(geometry, p, rule))
        .collect::<Result<Vec<_>, _>>()?;
    let pm = PairMoments { t: &moments };
    let one = Complex::new(1.0, 0.0);
    let jj = Complex::new(0.0, 1.0);

    // Parameter p -> (kind, target): 0 = Re α, 1 = Im α, 2 = θ.
    let kind = |p: usize| (p / nt, p % nt);
    let mut quads = Vec::with_capacity(l * (l + 1) / 2);
    for p in 0..l {
        for q in p..l {
            let (kp, i) = kind(p);
            let (kq, j) = kind(q);
            let g = match (kp, kq) {
                (0, 0) | (1, 1) => plus_adjoint(&pm.a_a(i, j), one),
                (0, 1) => plus_adjoint(&pm.a_a(i, j), jj),
                (0, 2) => plus_adjoint(&pm.a_ad(i, j), priors[j].alpha_mean),
                (1, 2) => plus_adjoint(&pm.a_ad(i, j), -jj * priors[j].alpha_mean),
                (2, 2) => {
                    if i == j {
                        let e2 = priors[i].alpha_mean.norm_sqr() + priors[i].alpha_var;
                        plus_adjoint(&pm.ad_ad(i, i), Complex::new(e2, 0.0))
                    } else {
                        plus_adjoint(
                            &pm.ad_ad(i, j),
                            priors[i].alpha_mean.conj() * priors[j].alpha_mean,
                        )
                    }
                }
                _ => unreachable!("parameters are ordered by kind"),
            };
            quads.push(g);
        }
    }
    let mut c = RealMatrix::zeros(l, l);
    for (i, p) in priors.iter().enumerate() {
        c[(i, i)] = 2.0 / p.alpha_var;
        c[(nt + i, nt + i)] = 2.0 / p.alpha_var;
        c[(2 * nt + i, 2 * nt + i)] = 1.0 / (p.theta_std * p.theta_std);
    }
    let bfim = BfimSpec::new(HermitianMatrix::from_real(&c), quads, snapshots, noise_var)?;

    // Structurally distinct blocks: Re-Re (i ≤ j), Re-Im (i < j), Re-θ and
    // Im-θ (all i, j), θ-θ (i ≤ j).
    let mut distinct = Vec::new();
    for i in 0..nt {
        for j in i..nt {
            distinct.push(bfim.quad(i, j).clone());
        }
    }
    for i in 0..nt {
        for j in (i + 1)..nt {
            distinct.push(bfim.quad(i, nt + j).clone());
        }
    }
    for i in 0..nt {
        for j in 0..nt {
            distinct.push(bfim.quad(i, 2 * nt + j).clone());
        }
    }
    for i in 0..nt {
        for j in 0..nt {
            distinct.push(bfim.quad(nt + i, 2 * nt + j).clone());
        }
    }
    for i in 0..nt {
        for j in i..nt {
            distinct.push(bfim.quad(2 * nt + i, 2 * nt + j).clone());
        }
    }
    let metric = QuadraticMetricSpec::structural(distinct, Scalarization::MaxDiag)?;
    Ok((bfim, metric))
}

/// Structural count of distinct quadratic terms for `N_tr` LoS targets.
pub fn multitarget_d(n_targets: usize) -> usize {
    (7 * n_targets * n_targets + n_targets) / 2
}

/// AoA-only metric for zero-mean path losses: `[J^{-1}]_ii = 1/(c_ii +
/// (Υ/σ²) Tr(G̃_ii V V^H))` for each target angle.
#[derive(Debug, Clone, PartialEq)]
pub struct AoaOnlySpec {
    pub quad: QuadraticMetricSpec,
    pub prior_diag: Vec<f64>,
    pub snapshots: usize,
    pub noise_var: f64,
}

impl AoaOnlySpec {
    /// Diagonal BFIM over the angles alone (off-diagonal quadratic matrices
    /// are zero), usable by the generic BFIM design path.
    pub fn as_diagonal_bfim(&self) -> Result<BfimSpec, ChannelError> {
        let l = self.prior_diag.len();
        let n = self.quad.n_tx();
        let c = RealMatrix::from_diagonal(&RealVector::from_vec(self.prior_diag.clone()));
        let mut quads = Vec::with_capacity(l * (l + 1) / 2);
        for i in 0..l {
            for j in i..l {
                quads.push(if i == j {
                    self.quad.q_matrices()[i].clone()
                } else {
                    HermitianMatrix::zeros(n)
                });
            }
        }
        BfimSpec::new(
            HermitianMatrix::from_real(&c),
            quads,
            self.snapshots,
            self.noise_var,
        )
    }

    /// Per-angle information `c_ii + (Υ/σ²) Tr(G̃_ii R)`.
    pub fn information(&self, r: &HermitianMatrix) -> Vec<f64> {
        let g = self.snapshots as f64 / self.noise_var;
        self.quad
            .q_matrices()
            .iter()
            .zip(&self.prior_diag)
            .map(|(q, c)| c + g * q.inner(r))
            .collect()
    }
}

/// Builds the AoA-only metric; every prior must have zero mean path loss.
pub fn build_aoa_only_spec(
    geometry: &ArrayGeometry,
    priors: &[TargetPrior],
    snapshots: usize,
    noise_var: f64,
    quadrature_nodes: usize,
) -> Result<AoaOnlySpec, ChannelError> {
    if priors.is_empty() {
        return Err(ChannelError::InvalidInput(
            "at least one target is required".into(),
        ));
    }
    for (index, p) in priors.iter().enumerate() {
        p.validate()?;
        if p.alpha_mean.norm() != 0.0 {
            return Err(ChannelError::NonzeroMean { index });
        }
    }
    let rule = AngleExpectation::GaussHermite(quadrature_nodes);
    let mut quads = Vec::with_capacity(priors.len());
    let mut prior_diag = Vec::with_capacity(priors.len());
    for p in priors {
        let m = target_moments(geometry, p, rule)?;
        quads.push(plus_adjoint(&m.ad_ad, Complex::new(p.alpha_var, 0.0)));
        prior_diag.push(1.0 / (p.theta_std * p.theta_std));
    }
    let quad = QuadraticMetricSpec::structural(quads, Scalarization::MaxDiag)?;
    Ok(AoaOnlySpec {
        quad,
        prior_diag,
        snapshots,
        noise_var,
    })
}

/// How sensing-beam interference is handled at the users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InterferenceMode {
    /// Sensing interference cancelled at the users.
    #[serde(rename = "ic")]
    Ic,
    /// Sensing interference treated as noise.
    #[serde(rename = "nic")]
    Nic,
}

/// The sensing metric attached to a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum SensingMetric {
    /// A BFIM together with its distinct quadratic matrices.
    Bfim {
        bfim: BfimSpec,
        quad: QuadraticMetricSpec,
    },
    /// Zero-mean AoA-only metric.
    AoaOnly(AoaOnlySpec),
    /// Any other d-quadratic metric (SNR, SCNR, beam pattern).
    Quadratic(QuadraticMetricSpec),
}

impl SensingMetric {
    /// The quadratic matrices whose values fully determine the metric.
    pub fn quad_spec(&self) -> &QuadraticMetricSpec {
        match self {
            Self::Bfim { quad, .. } => quad,
            Self::AoaOnly(a) => &a.quad,
            Self::Quadratic(q) => q,
        }
    }

    /// Structural number of quadratic terms.
    pub fn d(&self) -> usize {
        self.quad_spec().d()
    }

    /// The BFIM used for conic designs, when the metric has one.
    pub fn design_bfim(&self) -> Result<Option<BfimSpec>, ChannelError> {
        match self {
            Self::Bfim { bfim, .. } => Ok(Some(bfim.clone())),
            Self::AoaOnly(a) => Ok(Some(a.as_diagonal_bfim()?)),
            Self::Quadratic(_) => Ok(None),
        }
    }
}

/// Everything defining an ISAC beamforming problem.
#[derive(Debug, Clone, PartialEq)]
pub struct IsacScenario {
    pub geometry: ArrayGeometry,
    pub channels: Vec<ComplexVector>,
    pub sinr_targets: Vec<f64>,
    pub power_budget: f64,
    pub noise_var: f64,
    pub interference_mode: InterferenceMode,
    pub metric: SensingMetric,
}

impl IsacScenario {
    pub fn new(
        geometry: ArrayGeometry,
        channels: Vec<ComplexVector>,
        sinr_targets: Vec<f64>,
        power_budget: f64,
        noise_var: f64,
        interference_mode: InterferenceMode,
        metric: SensingMetric,
    ) -> Result<Self, ChannelError> {
        let s = Self {
            geometry,
            channels,
            sinr_targets,
            power_budget,
            noise_var,
            interference_mode,
            metric,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn k(&self) -> usize {
        self.channels.len()
    }

    /// Channel matrix `H = [h_1 … h_K]` (`n_tx × K`).
    pub fn channel_matrix(&self) -> ComplexMatrix {
        if self.channels.is_empty() {
            return ComplexMatrix::zeros(self.geometry.n_tx, 0);
        }
        ComplexMatrix::from_columns(&self.channels)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let n = self.geometry.n_tx;
        let k = self.k();
        if k > n {
            return Err(ChannelError::InvalidInput(format!(
                "K = {k} exceeds n_tx = {n}"
            )));
        }
        if self.sinr_targets.len() != k {
            return Err(ChannelError::InvalidInput(
                "one SINR target per user is required".into(),
            ));
        }
        if self.sinr_targets.iter().any(|&g| !(g > 0.0)) {
            return Err(ChannelError::InvalidInput(
                "SINR targets must be positive".into(),
            ));
        }
        if !(self.power_budget > 0.0) || !(self.noise_var > 0.0) {
            return Err(ChannelError::InvalidInput(
                "power budget and noise variance must be positive".into(),
            ));
        }
        if self.channels.iter().any(|h| h.len() != n) {
            return Err(ChannelError::InvalidInput(
                "channel length must equal n_tx".into(),
            ));
        }
        if self.metric.quad_spec().n_tx() != n {
            return Err(ChannelError::InvalidInput(
                "metric size does not match n_tx".into(),
            ));
        }
        if k > 0 {
            let s = self.channel_matrix().singular_values();
            let max = s.iter().fold(0.0_f64, |a, &x| a.max(x));
            let min = s.iter().fold(f64::INFINITY, |a, &x| a.min(x));
            if !(min > 1e-8 * max) {
                return Err(ChannelError::InvalidInput(
                    "channels are linearly dependent".into(),
                ));
            }
        }
        Ok(())
    }
}
