//! Dense conic solver over products of PSD blocks, builders for the power
//! minimization and sensing design relaxations, and rank-one extraction.
//!
//! The solver is an over-relaxed alternating-direction method on the
//! standard form `min c·x s.t. A x = b, x ∈ K`: an exact projection onto the
//! affine set (pre-factored normal equations) alternates with a projection
//! onto the cone product (eigenvalue clipping per block). Complex Hermitian
//! blocks are projected through their real symmetric embedding.

use nalgebra::SymmetricEigen;
use thiserror::Error;

use crate::channel::{
    hermitian_coords, hermitian_from_coords, BfimSpec, ChannelError, InterferenceMode,
    IsacScenario, Scalarization, SensingMetric,
};
use crate::metrics::{BeamformerMatrix, MetricsError};
use crate::numerics::{
    orthonormal_complement, orthonormalize_columns, Complex, ComplexMatrix, ComplexVector,
    HermitianMatrix, NumericsError, RealMatrix, RealVector,
};

/// Errors raised by problem construction, solving and extraction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdpError {
    #[error("malformed problem: {0}")]
    InvalidProblem(String),
    #[error("scalarization {0} has no conic encoding")]
    UnsupportedScalarization(String),
    #[error("user {user} receives zero useful power")]
    ZeroUsefulPower { user: usize },
    #[error("solver finished with status {0:?}")]
    NotSolved(SolveStatus),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Type of a PSD block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Complex Hermitian PSD block (`n²` real degrees of freedom).
    Hermitian,
    /// Real symmetric PSD block (`n(n+1)/2` degrees of freedom).
    Symmetric,
}

/// A named PSD block variable.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDesc {
    pub name: String,
    pub dim: usize,
    pub kind: BlockKind,
}

/// A named scalar variable, either free or nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarDesc {
    pub name: String,
    pub nonneg: bool,
}

/// `Σ_b Re Tr(M_b X_b) + Σ_s a_s·x_s`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearExpr {
    pub blocks: Vec<(usize, HermitianMatrix)>,
    pub scalars: Vec<(usize, f64)>,
}

impl LinearExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_block(mut self, block: usize, m: HermitianMatrix) -> Self {
        self.blocks.push((block, m));
        self
    }

    pub fn with_scalar(mut self, scalar: usize, coef: f64) -> Self {
        self.scalars.push((scalar, coef));
        self
    }

    /// Appends every term of `other`.
    pub fn extend(&mut self, other: LinearExpr) {
        self.blocks.extend(other.blocks);
        self.scalars.extend(other.scalars);
    }

    /// Multiplies every coefficient by `s`.
    pub fn scaled(mut self, s: f64) -> Self {
        for (_, m) in &mut self.blocks {
            *m = m.scale(s);
        }
        for (_, c) in &mut self.scalars {
            *c *= s;
        }
        self
    }

    /// Evaluates the expression at given block and scalar values.
    pub fn evaluate(&self, blocks: &[HermitianMatrix], scalars: &[f64]) -> f64 {
        let b: f64 = self.blocks.iter().map(|(i, m)| m.inner(&blocks[*i])).sum();
        let s: f64 = self.scalars.iter().map(|(i, c)| c * scalars[*i]).sum();
        b + s
    }
}

/// Constraint sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Ge,
    Le,
}

/// `expr (=|≥|≤) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub expr: LinearExpr,
    pub sense: Sense,
    pub rhs: f64,
    pub label: String,
}

/// Minimize a linear objective over PSD blocks and scalars subject to
/// linear constraints.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProblem {
    pub blocks: Vec<BlockDesc>,
    pub scalars: Vec<ScalarDesc>,
    pub objective: LinearExpr,
    pub constraints: Vec<Constraint>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, name: &str, dim: usize, kind: BlockKind) -> usize {
        self.blocks.push(BlockDesc {
            name: name.to_string(),
            dim,
            kind,
        });
        self.blocks.len() - 1
    }

    pub fn add_scalar(&mut self, name: &str, nonneg: bool) -> usize {
        self.scalars.push(ScalarDesc {
            name: name.to_string(),
            nonneg,
        });
        self.scalars.len() - 1
    }

    pub fn add_constraint(&mut self, expr: LinearExpr, sense: Sense, rhs: f64, label: &str) {
        self.constraints.push(Constraint {
            expr,
            sense,
            rhs,
            label: label.to_string(),
        });
    }

    /// Checks block indices, matrix sizes and finiteness.
    pub fn validate(&self) -> Result<(), SdpError> {
        let check = |e: &LinearExpr, what: &str| -> Result<(), SdpError> {
            for (b, m) in &e.blocks {
                let desc = self.blocks.get(*b).ok_or_else(|| {
                    SdpError::InvalidProblem(format!("{what}: unknown block {b}"))
                })?;
                if m.dim() != desc.dim {
                    return Err(SdpError::InvalidProblem(format!(
                        "{what}: block {} has dim {}, coefficient has dim {}",
                        desc.name,
                        desc.dim,
                        m.dim()
                    )));
                }
                if m.matrix()
                    .iter()
                    .any(|z| !z.re.is_finite() || !z.im.is_finite())
                {
                    return Err(SdpError::InvalidProblem(format!(
                        "{what}: non-finite coefficient"
                    )));
                }
            }
            for (s, c) in &e.scalars {
                if *s >= self.scalars.len() || !c.is_finite() {
                    return Err(SdpError::InvalidProblem(format!(
                        "{what}: bad scalar term {s}"
                    )));
                }
            }
            Ok(())
        };
        if self.blocks.iter().any(|b| b.dim == 0) {
            return Err(SdpError::InvalidProblem("zero-dimensional block".into()));
        }
        check(&self.objective, "objective")?;
        for c in &self.constraints {
            check(&c.expr, &c.label)?;
            if !c.rhs.is_finite() {
                return Err(SdpError::InvalidProblem(format!(
                    "{}: non-finite rhs",
                    c.label
                )));
            }
        }
        Ok(())
    }
}

/// Solver parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative tolerance on primal residual, dual residual and gap.
    pub tol: f64,
    pub max_iter: usize,
    /// Iterations before infeasibility certificates are examined.
    pub infeasibility_after: usize,
    /// Over-relaxation factor in (0, 2).
    pub relaxation: f64,
    /// Initial penalty parameter.
    pub rho: f64,
    /// Iterations between convergence checks.
    pub check_every: usize,
    /// History length of the Anderson acceleration (0 disables it).
    pub anderson_memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 50_000,
            infeasibility_after: 5_000,
            relaxation: 1.6,
            rho: 0.1,
            check_every: 10,
            anderson_memory: 20,
        }
    }
}

impl SolverOptions {
    /// Tolerance for power minimization, whose equality targets can span
    /// several decades and must each be reproduced to `1e-6` relative.
    pub fn precise() -> Self {
        Self {
            tol: 1e-9,
            ..Self::default()
        }
    }
}

/// Termination status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

/// Primal and dual solution with KKT diagnostics.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// Primal PSD blocks (real symmetric blocks have zero imaginary part).
    pub blocks: Vec<HermitianMatrix>,
    pub scalars: Vec<f64>,
    /// Multiplier of every constraint, in problem order.
    pub duals: Vec<f64>,
    /// Dual slack matrix of every block.
    pub dual_blocks: Vec<HermitianMatrix>,
    pub objective: f64,
    /// Relative primal residual `‖A x − b‖ / (1 + ‖b‖)`.
    pub primal_residual: f64,
    /// Relative dual residual `dist(c − Aᵀy, K*) / (1 + ‖c‖)`.
    pub dual_residual: f64,
    /// Relative duality gap.
    pub gap: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

fn sym_coords(m: &RealMatrix) -> Vec<f64> {
    let n = m.nrows();
    let mut v = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        v.push(m[(i, i)]);
    }
    let r2 = std::f64::consts::SQRT_2;
    for i in 0..n {
        for j in (i + 1)..n {
            v.push(r2 * 0.5 * (m[(i, j)] + m[(j, i)]));
        }
    }
    v
}

fn sym_from_coords(v: &[f64], n: usize) -> RealMatrix {
    let mut m = RealMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = v[i];
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            m[(i, j)] = s * v[k];
            m[(j, i)] = s * v[k];
            k += 1;
        }
    }
    m
}

/// Layout of the vectorized variable.
struct Layout {
    offsets: Vec<usize>,
    sizes: Vec<usize>,
    kinds: Vec<BlockKind>,
    dims: Vec<usize>,
    scalar_offset: usize,
    scalar_nonneg: Vec<bool>,
    n: usize,
}

impl Layout {
    fn new(p: &ConicProblem, slack_count: usize) -> Self {
        let mut offsets = Vec::new();
        let mut sizes = Vec::new();
        let mut off = 0;
        for b in &p.blocks {
            let size = match b.kind {
                BlockKind::Hermitian => b.dim * b.dim,
                BlockKind::Symmetric => b.dim * (b.dim + 1) / 2,
            };
            offsets.push(off);
            sizes.push(size);
            off += size;
        }
        let mut scalar_nonneg: Vec<bool> = p.scalars.iter().map(|s| s.nonneg).collect();
        scalar_nonneg.extend(std::iter::repeat_n(true, slack_count));
        let n = off + scalar_nonneg.len();
        Self {
            offsets,
            sizes,
            kinds: p.blocks.iter().map(|b| b.kind).collect(),
            dims: p.blocks.iter().map(|b| b.dim).collect(),
            scalar_offset: off,
            scalar_nonneg,
            n,
        }
    }

    fn coords_of(&self, block: usize, m: &HermitianMatrix) -> Vec<f64> {
        match self.kinds[block] {
            BlockKind::Hermitian => hermitian_coords(m).as_slice().to_vec(),
            BlockKind::Symmetric => sym_coords(&m.real_part()),
        }
    }

    fn expr_row(&self, e: &LinearExpr, row: &mut [f64]) {
        for (b, m) in &e.blocks {
            let c = self.coords_of(*b, m);
            let off = self.offsets[*b];
            for (k, v) in c.iter().enumerate() {
                row[off + k] += v;
            }
        }
        for (s, c) in &e.scalars {
            row[self.scalar_offset + s] += c;
        }
    }

    fn block_matrix(&self, block: usize, x: &[f64]) -> HermitianMatrix {
        let off = self.offsets[block];
        let v = &x[off..off + self.sizes[block]];
        let n = self.dims[block];
        match self.kinds[block] {
            BlockKind::Hermitian => hermitian_from_coords(v, n),
            BlockKind::Symmetric => HermitianMatrix::from_real(&sym_from_coords(v, n)),
        }
    }

    /// Projection onto the cone product (in place).
    fn project_cone(&self, x: &mut [f64]) {
        for b in 0..self.offsets.len() {
            let off = self.offsets[b];
            let slice = &mut x[off..off + self.sizes[b]];
            match self.kinds[b] {
                BlockKind::Hermitian => project_hermitian_coords(slice, self.dims[b]),
                BlockKind::Symmetric => project_symmetric_coords(slice, self.dims[b]),
            }
        }
        for (k, &nn) in self.scalar_nonneg.iter().enumerate() {
            if nn {
                let v = &mut x[self.scalar_offset + k];
                *v = v.max(0.0);
            }
        }
    }

    /// Projection onto the dual cone (free scalars map to zero).
    fn project_dual_cone(&self, s: &mut [f64]) {
        let (blocks, scalars) = s.split_at_mut(self.scalar_offset);
        let mut tmp = blocks.to_vec();
        tmp.extend(std::iter::repeat_n(0.0, scalars.len()));
        self.project_cone(&mut tmp);
        blocks.copy_from_slice(&tmp[..self.scalar_offset]);
        for (k, &nn) in self.scalar_nonneg.iter().enumerate() {
            scalars[k] = if nn { scalars[k].max(0.0) } else { 0.0 };
        }
    }
}

fn clip_eigen(m: RealMatrix) -> RealMatrix {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut out = RealMatrix::zeros(n, n);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > 0.0 {
            let q = eig.eigenvectors.column(k);
            out.ger(l, &q, &q, 1.0);
        }
    }
    out
}

fn project_symmetric_coords(v: &mut [f64], n: usize) {
    let m = sym_from_coords(v, n);
    let p = clip_eigen(m);
    v.copy_from_slice(&sym_coords(&p));
}

fn project_hermitian_coords(v: &mut [f64], n: usize) {
    // Build the real embedding of the Hermitian matrix directly from coords.
    let mut e = RealMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        e[(i, i)] = v[i];
        e[(n + i, n + i)] = v[i];
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let (re, im) = (s * v[k], s * v[k + 1]);
            e[(i, j)] = re;
            e[(j, i)] = re;
            e[(n + i, n + j)] = re;
            e[(n + j, n + i)] = re;
            e[(n + i, j)] = im;
            e[(j, n + i)] = im;
            e[(n + j, i)] = -im;
            e[(i, n + j)] = -im;
            k += 2;
        }
    }
    let p = clip_eigen(e);
    for i in 0..n {
        v[i] = 0.5 * (p[(i, i)] + p[(n + i, n + i)]);
    }
    let r2 = std::f64::consts::SQRT_2;
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let re = 0.5 * (p[(i, j)] + p[(n + i, n + j)]);
            let im = 0.5 * (p[(n + i, j)] - p[(i, n + j)]);
            v[k] = r2 * re;
            v[k + 1] = r2 * im;
            k += 2;
        }
    }
}

fn concat(a: &RealVector, b: &RealVector) -> RealVector {
    RealVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

/// Type-II Anderson acceleration of a fixed-point map from its residuals.
struct Anderson {
    memory: usize,
    last: Option<(RealVector, RealVector)>,
    s_hist: Vec<RealVector>,
    y_hist: Vec<RealVector>,
}

impl Anderson {
    fn new(memory: usize) -> Self {
        Self {
            memory,
            last: None,
            s_hist: Vec::new(),
            y_hist: Vec::new(),
        }
    }

    fn reset(&mut self) {
        self.last = None;
        self.s_hist.clear();
        self.y_hist.clear();
    }

    fn push(&mut self, x: &RealVector, g: &RealVector) {
        if self.memory == 0 {
            return;
        }
        if let Some((px, pg)) = &self.last {
            self.s_hist.push(x - px);
            self.y_hist.push(g - pg);
            if self.s_hist.len() > self.memory {
                self.s_hist.remove(0);
                self.y_hist.remove(0);
            }
        }
        self.last = Some((x.clone(), g.clone()));
    }

    /// `x + g − (S + Y)γ` with `γ = argmin ‖g − Yγ‖`.
    fn extrapolate(&self, x: &RealVector, g: &RealVector) -> Option<RealVector> {
        let m = self.y_hist.len();
        if m == 0 {
            return None;
        }
        let mut gram = RealMatrix::zeros(m, m);
        let mut rhs = RealVector::zeros(m);
        for i in 0..m {
            rhs[i] = self.y_hist[i].dot(g);
            for j in 0..=i {
                let v = self.y_hist[i].dot(&self.y_hist[j]);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        let scale = (0..m).map(|i| gram[(i, i)]).fold(0.0, f64::max);
        if !(scale > 0.0) {
            return None;
        }
        for i in 0..m {
            gram[(i, i)] += 1e-10 * scale;
        }
        let gamma = gram.cholesky()?.solve(&rhs);
        let mut predicted = g.clone();
        let mut out = x + g;
        for j in 0..m {
            predicted -= &self.y_hist[j] * gamma[j];
            out -= (&self.s_hist[j] + &self.y_hist[j]) * gamma[j];
        }
        // Residuals that the history cannot explain (e.g. a steady drift on
        // infeasible problems) give no useful extrapolation.
        if predicted.norm() > 0.99 * g.norm() {
            return None;
        }
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

/// Equality system `A x = b` reduced to linearly independent rows with a
/// Cholesky factor of `A Aᵀ`.
struct AffineProjector {
    a: RealMatrix,
    b: RealVector,
    chol: RealMatrix,
}

impl AffineProjector {
    /// Greedy row selection by incremental Cholesky; returns the projector
    /// and the kept row indices.
    fn new(a: &RealMatrix, b: &RealVector) -> (Self, Vec<usize>) {
        let m = a.nrows();
        let mut kept: Vec<usize> = Vec::new();
        let mut l = RealMatrix::zeros(m, m);
        for i in 0..m {
            let ai = a.row(i);
            let r = kept.len();
            let mut w = vec![0.0; r];
            for (p, &j) in kept.iter().enumerate() {
                let mut s = ai.dot(&a.row(j));
                for q in 0..p {
                    s -= l[(p, q)] * w[q];
                }
                w[p] = s / l[(p, p)];
            }
            let d = ai.norm_squared() - w.iter().map(|x| x * x).sum::<f64>();
            if d > 1e-13 * ai.norm_squared().max(f64::MIN_POSITIVE) {
                for (q, wq) in w.iter().enumerate() {
                    l[(r, q)] = *wq;
                }
                l[(r, r)] = d.sqrt();
                kept.push(i);
            }
        }
        let r = kept.len();
        let chol = l.view((0, 0), (r, r)).into_owned();
        let a_sel = RealMatrix::from_fn(r, a.ncols(), |i, j| a[(kept[i], j)]);
        let b_sel = RealVector::from_fn(r, |i, _| b[kept[i]]);
        (
            Self {
                a: a_sel,
                b: b_sel,
                chol,
            },
            kept,
        )
    }

    /// Solves `(A Aᵀ) y = r`.
    fn solve_normal(&self, r: &RealVector) -> RealVector {
        let n = r.len();
        let mut y = r.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.chol[(i, k)] * y[k];
            }
            y[i] = s / self.chol[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.chol[(k, i)] * y[k];
            }
            y[i] = s / self.chol[(i, i)];
        }
        y
    }

    /// Projects `w` onto `{x : A x = b}`; returns the projection and the
    /// multiplier `λ = (A Aᵀ)⁻¹ (A w − b)`.
    fn project(&self, w: &RealVector) -> (RealVector, RealVector) {
        if self.a.nrows() == 0 {
            return (w.clone(), RealVector::zeros(0));
        }
        let r = &self.a * w - &self.b;
        let mut lam = self.solve_normal(&r);
        let mut x = w - self.a.tr_mul(&lam);
        // One refinement step against cancellation in ill-conditioned rows.
        let r2 = &self.a * &x - &self.b;
        let dl = self.solve_normal(&r2);
        x -= self.a.tr_mul(&dl);
        lam += dl;
        (x, lam)
    }
}

struct StandardForm {
    layout: Layout,
    a: RealMatrix,
    b: RealVector,
    c: RealVector,
    row_scale: Vec<f64>,
}

fn standard_form(p: &ConicProblem) -> StandardForm {
    let slack_count = p
        .constraints
        .iter()
        .filter(|c| c.sense != Sense::Eq)
        .count();
    let layout = Layout::new(p, slack_count);
    let m = p.constraints.len();
    let mut a = RealMatrix::zeros(m, layout.n);
    let mut b = RealVector::zeros(m);
    let mut slack = layout.scalar_offset + p.scalars.len();
    let mut row = vec![0.0; layout.n];
    for (i, con) in p.constraints.iter().enumerate() {
        row.iter_mut().for_each(|x| *x = 0.0);
        layout.expr_row(&con.expr, &mut row);
        match con.sense {
            Sense::Eq => {}
            Sense::Ge => {
                row[slack] = -1.0;
                slack += 1;
            }
            Sense::Le => {
                row[slack] = 1.0;
                slack += 1;
            }
        }
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = *v;
        }
        b[i] = con.rhs;
    }
    let mut c = vec![0.0; layout.n];
    layout.expr_row(&p.objective, &mut c);
    let mut row_scale = vec![1.0; m];
    for i in 0..m {
        let nrm = a.row(i).norm();
        if nrm > 0.0 {
            row_scale[i] = 1.0 / nrm;
            a.row_mut(i).scale_mut(1.0 / nrm);
            b[i] /= nrm;
        }
    }
    StandardForm {
        layout,
        a,
        b,
        c: RealVector::from_vec(c),
        row_scale,
    }
}

/// Iterations without halving the KKT merit after which acceleration is
/// considered stalled.
const STALL_WINDOW: usize = 3_000;

/// Plain steps taken after a stall before acceleration resumes.
const PLAIN_STRETCH: usize = 500;

/// Solves a conic problem. Structural problems yield `Err`; numerical
/// outcomes are reported through [`SdpSolution::status`].
pub fn solve(problem: &ConicProblem, opts: &SolverOptions) -> Result<SdpSolution, SdpError> {
    problem.validate()?;
    let sf = standard_form(problem);
    let lay = &sf.layout;
    let n = lay.n;
    let m = sf.a.nrows();

    // Zero rows: consistent ones are dropped, inconsistent ones are infeasible.
    let mut live = Vec::new();
    let mut trivially_infeasible = false;
    for i in 0..m {
        if sf.a.row(i).norm() == 0.0 {
            if sf.b[i].abs() > 1e-12 * (1.0 + problem.constraints[i].rhs.abs()) {
                trivially_infeasible = true;
            }
        } else {
            live.push(i);
        }
    }
    let a_live = RealMatrix::from_fn(live.len(), n, |i, j| sf.a[(live[i], j)]);
    let b_live = RealVector::from_fn(live.len(), |i, _| sf.b[live[i]]);

    let b_scale = b_live
        .norm()
        .max(1e-12)
        .max(if b_live.norm() == 0.0 { 1.0 } else { 0.0 });
    let c_norm = sf.c.norm();
    let c_scale = if c_norm > 0.0 { c_norm } else { 1.0 };
    let bs = &b_live / b_scale;
    let cs = &sf.c / c_scale;
    let (proj, kept) = AffineProjector::new(&a_live, &bs);

    let mut z = RealVector::zeros(n);
    let mut u = RealVector::zeros(n);
    // Input of the next step; differs from (z, u) after an accelerated move.
    let mut z_in = z.clone();
    let mut u_in = u.clone();
    let mut anderson = Anderson::new(opts.anderson_memory);
    let mut fallback: Option<(RealVector, RealVector, f64)> = None;
    let mut rho = opts.rho;
    let alpha = opts.relaxation;
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    let mut lam_full = RealVector::zeros(kept.len());
    let mut u_check = u.clone();
    let mut prev_cert: Option<f64> = None;
    let bnorm = bs.norm();
    let cnorm = cs.norm();
    let (mut pr, mut dr, mut gap) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    // Stall detection: best KKT merit so far, when it was reached, and the
    // end of the current stretch of plain steps.
    let (mut best_merit, mut best_at, mut plain_until) = (f64::INFINITY, 0, 0);

    if trivially_infeasible {
        status = SolveStatus::Infeasible;
    } else {
        for it in 1..=opts.max_iter {
            iterations = it;
            let w = &z_in - &u_in - &cs / rho;
            let (x, lam) = proj.project(&w);
            let xr = &x * alpha + &z_in * (1.0 - alpha);
            let mut znew = &xr + &u_in;
            lay.project_cone(znew.as_mut_slice());
            u = &u_in + &xr - &znew;
            z = znew;
            lam_full = lam;

            // Fixed-point residual of the step, with the acceleration safeguard.
            let g = concat(&(&z - &z_in), &(&u - &u_in));
            let g_norm = g.norm();
            if let Some((fz, fu, ref_norm)) = fallback.take() {
                if g_norm > ref_norm {
                    z_in = fz;
                    u_in = fu;
                    anderson.reset();
                    continue;
                }
            }
            // Plain steps are needed only while infeasibility is examined,
            // which requires a persistent primal residual.
            let accelerate =
                (it < opts.infeasibility_after || pr <= 1e2 * opts.tol) && it >= plain_until;
            if accelerate {
                let state = concat(&z_in, &u_in);
                anderson.push(&state, &g);
                match anderson.extrapolate(&state, &g) {
                    Some(cand) if (&cand - &state).norm() <= 1e6 * (1.0 + state.norm()) => {
                        fallback = Some((z.clone(), u.clone(), g_norm));
                        z_in = cand.rows(0, n).into_owned();
                        u_in = cand.rows(n, n).into_owned();
                    }
                    _ => {
                        z_in = z.clone();
                        u_in = u.clone();
                    }
                }
            } else {
                z_in = z.clone();
                u_in = u.clone();
            }

            if it % opts.check_every != 0 {
                continue;
            }
            // KKT residuals of the scaled problem.
            let y = &lam_full * (-rho);
            let r_p = &a_live * &z - &bs;
            pr = r_p.norm() / (1.0 + bnorm);
            let mut s = &cs - proj.a.tr_mul(&y);
            let s_raw = s.clone();
            lay.project_dual_cone(s.as_mut_slice());
            dr = (&s_raw - &s).norm() / (1.0 + cnorm);
            let pobj = cs.dot(&z);
            let dobj = proj.b.dot(&y);
            gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            if pr <= opts.tol && dr <= opts.tol && gap <= opts.tol {
                status = SolveStatus::Optimal;
                break;
            }
            // Acceleration can stagnate close to the solution; a stretch of
            // plain steps with a fresh history gets it moving again.
            let merit = pr.max(dr).max(gap);
            if merit < 0.5 * best_merit {
                (best_merit, best_at) = (merit, it);
            } else if it - best_at >= STALL_WINDOW {
                anderson.reset();
                fallback = None;
                plain_until = it + PLAIN_STRETCH;
                (best_merit, best_at) = (merit, it);
            }

            // Penalty adaptation by residual balancing.
            if it % (opts.check_every * 10) == 0 && pr > 0.0 && dr > 0.0 {
                let ratio = (pr / dr).sqrt();
                if !(0.2..=5.0).contains(&ratio) {
                    let new_rho = (rho * ratio.clamp(0.01, 100.0)).clamp(1e-6, 1e6);
                    u *= rho / new_rho;
                    rho = new_rho;
                    z_in = z.clone();
                    u_in = u.clone();
                    anderson.reset();
                    fallback = None;
                }
            }

            // Infeasibility: steady displacement of u with a valid certificate.
            if it >= opts.infeasibility_after && it % (opts.check_every * 10) == 0 {
                let g = (&u_check - &u) / (opts.check_every * 10) as f64;
                u_check = u.clone();
                let gn = g.norm();
                if pr > 1e2 * opts.tol && gn > 1e-3 * opts.tol {
                    let yc = proj.solve_normal(&(&proj.a * &g));
                    let atyc = proj.a.tr_mul(&yc);
                    let mut dual = atyc.clone();
                    lay.project_dual_cone(dual.as_mut_slice());
                    let cone_gap = (&atyc - &dual).norm();
                    let fit = (&atyc - &g).norm();
                    let by = proj.b.dot(&yc);
                    let ok =
                        fit <= 1e-2 * gn && cone_gap <= 1e-2 * atyc.norm() && by < -0.5 * gn * gn;
                    if ok {
                        if let Some(prev) = prev_cert {
                            if (prev - gn).abs() <= 1e-2 * gn {
                                status = SolveStatus::Infeasible;
                                break;
                            }
                        }
                        prev_cert = Some(gn);
                    } else {
                        prev_cert = None;
                    }
                }
            } else if it + opts.check_every * 10 >= opts.infeasibility_after
                && it < opts.infeasibility_after
            {
                u_check = u.clone();
            }
        }
    }

    // Unscale: x = b_scale·z, y_orig = c_scale·D·y_scaled, S = c_scale·s.
    let x = &z * b_scale;
    let mut duals = vec![0.0; problem.constraints.len()];
    let y_scaled = &lam_full * (-rho);
    for (p, &row_live) in kept.iter().enumerate() {
        let orig = live[row_live];
        if p < y_scaled.len() {
            duals[orig] = c_scale * sf.row_scale[orig] * y_scaled[p];
        }
    }
    let mut s = if y_scaled.len() == proj.a.nrows() {
        &cs - proj.a.tr_mul(&y_scaled)
    } else {
        cs.clone()
    };
    lay.project_dual_cone(s.as_mut_slice());
    let s = s * c_scale;

    let blocks: Vec<HermitianMatrix> = (0..problem.blocks.len())
        .map(|b| lay.block_matrix(b, x.as_slice()))
        .collect();
    let dual_blocks = (0..problem.blocks.len())
        .map(|b| lay.block_matrix(b, s.as_slice()))
        .collect();
    let scalars: Vec<f64> = (0..problem.scalars.len())
        .map(|k| x[lay.scalar_offset + k])
        .collect();
    let objective = problem.objective.evaluate(&blocks, &scalars);
    Ok(SdpSolution {
        blocks,
        scalars,
        duals,
        dual_blocks,
        objective,
        primal_residual: pr,
        dual_residual: dr,
        gap,
        status,
        iterations,
    })
}

/// Maps an SDR solution back to transmit covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceLayout {
    pub n_tx: usize,
    /// Block index of every `R_k`.
    pub comm_blocks: Vec<usize>,
    /// Block index of the sensing covariance (`R_s`, or `S` when a basis is
    /// present).
    pub sensing_block: Option<usize>,
    /// Orthonormal basis `B` of the complement of the channel span, with
    /// `R_s = B S B^H`.
    pub sensing_basis: Option<ComplexMatrix>,
}

impl CovarianceLayout {
    fn new(
        problem: &mut ConicProblem,
        scenario: &IsacScenario,
        orthogonal_sensing: bool,
    ) -> Result<Self, SdpError> {
        let n = scenario.geometry.n_tx;
        let comm_blocks = (0..scenario.k())
            .map(|k| problem.add_block(&format!("R_{}", k + 1), n, BlockKind::Hermitian))
            .collect();
        let (sensing_block, sensing_basis) = if orthogonal_sensing && scenario.k() > 0 {
            let basis = channel_complement_basis(scenario)?;
            if basis.ncols() == 0 {
                (None, Some(basis))
            } else {
                let b = problem.add_block("S", basis.ncols(), BlockKind::Hermitian);
                (Some(b), Some(basis))
            }
        } else {
            (
                Some(problem.add_block("R_s", n, BlockKind::Hermitian)),
                None,
            )
        };
        Ok(Self {
            n_tx: n,
            comm_blocks,
            sensing_block,
            sensing_basis,
        })
    }

    /// `Tr(Q R)` with `R = Σ R_k + R_s` as a linear expression.
    pub fn gram_expr(&self, q: &HermitianMatrix) -> LinearExpr {
        let mut e = LinearExpr::new();
        for &b in &self.comm_blocks {
            e.blocks.push((b, q.clone()));
        }
        if let Some(s) = self.sensing_block {
            let m = match &self.sensing_basis {
                Some(basis) => q.congruence(&basis.adjoint()),
                None => q.clone(),
            };
            e.blocks.push((s, m));
        }
        e
    }

    /// Communication covariances `R_k` and the total covariance `R`.
    pub fn covariances(&self, sol: &SdpSolution) -> (Vec<HermitianMatrix>, HermitianMatrix) {
        let rk: Vec<HermitianMatrix> = self
            .comm_blocks
            .iter()
            .map(|&b| sol.blocks[b].clone())
            .collect();
        let mut r = HermitianMatrix::zeros(self.n_tx);
        for m in &rk {
            r = r.add(m);
        }
        if let Some(s) = self.sensing_block {
            let rs = match &self.sensing_basis {
                Some(basis) => sol.blocks[s].congruence(basis),
                None => sol.blocks[s].clone(),
            };
            r = r.add(&rs);
        }
        (rk, r)
    }
}

/// Orthonormal basis (columns) of the orthogonal complement of
/// `span{h_1, …, h_K}`.
pub fn channel_complement_basis(scenario: &IsacScenario) -> Result<ComplexMatrix, SdpError> {
    let n = scenario.geometry.n_tx;
    if scenario.k() == 0 {
        return Ok(ComplexMatrix::identity(n, n));
    }
    let q = orthonormalize_columns(&scenario.channel_matrix());
    if q.ncols() == n {
        return Ok(ComplexMatrix::zeros(n, 0));
    }
    Ok(orthonormal_complement(&q.adjoint())?.adjoint())
}

/// A conic problem together with the map back to covariances.
#[derive(Debug, Clone)]
pub struct BuiltProblem {
    pub problem: ConicProblem,
    pub layout: CovarianceLayout,
    /// Block of the Schur-complement epigraph, when present.
    pub epigraph_block: Option<usize>,
}

fn add_sinr_constraints(
    problem: &mut ConicProblem,
    layout: &CovarianceLayout,
    scenario: &IsacScenario,
) {
    for (k, h) in scenario.channels.iter().enumerate() {
        let hh = HermitianMatrix::outer(h);
        let g = scenario.sinr_targets[k];
        let mut e = LinearExpr::new();
        match scenario.interference_mode {
            InterferenceMode::Ic => {
                for (n, &b) in layout.comm_blocks.iter().enumerate() {
                    let coef = if n == k { 1.0 / g } else { -1.0 };
                    e.blocks.push((b, hh.scale(coef)));
                }
            }
            InterferenceMode::Nic => {
                e.extend(layout.gram_expr(&hh).scaled(-1.0));
                e.blocks
                    .push((layout.comm_blocks[k], hh.scale(1.0 + 1.0 / g)));
            }
        }
        problem.add_constraint(e, Sense::Ge, scenario.noise_var, &format!("sinr_{}", k + 1));
    }
}

/// Targets of the power minimization: a full BFIM or the quadratic values.
#[derive(Debug, Clone, PartialEq)]
pub enum PowerMinTargets {
    Bfim(HermitianMatrix),
    Quads(Vec<f64>),
}

fn build_power_min(
    scenario: &IsacScenario,
    targets: &PowerMinTargets,
    orthogonal_sensing: bool,
) -> Result<BuiltProblem, SdpError> {
    let mut problem = ConicProblem::new();
    let layout = CovarianceLayout::new(&mut problem, scenario, orthogonal_sensing)?;
    problem.objective = layout.gram_expr(&HermitianMatrix::identity(scenario.geometry.n_tx));
    match targets {
        PowerMinTargets::Bfim(j) => {
            let bfim = scenario.metric.design_bfim()?.ok_or_else(|| {
                SdpError::InvalidProblem("BFIM targets need a BFIM metric".into())
            })?;
            let l = bfim.n_params();
            if j.dim() != l {
                return Err(SdpError::InvalidProblem(
                    "target BFIM has the wrong size".into(),
                ));
            }
            let c = bfim.prior_matrix();
            for i in 0..l {
                for k in i..l {
                    let t = (j.matrix()[(i, k)].re - c.matrix()[(i, k)].re) / bfim.gain();
                    problem.add_constraint(
                        layout.gram_expr(bfim.quad(i, k)),
                        Sense::Eq,
                        t,
                        &format!("bfim_{i}_{k}"),
                    );
                }
            }
        }
        PowerMinTargets::Quads(values) => {
            let spec = scenario.metric.quad_spec();
            if values.len() != spec.d() {
                return Err(SdpError::InvalidProblem(
                    "one target per quadratic term is required".into(),
                ));
            }
            for (i, (q, &v)) in spec.q_matrices().iter().zip(values).enumerate() {
                problem.add_constraint(layout.gram_expr(q), Sense::Eq, v, &format!("quad_{i}"));
            }
        }
    }
    add_sinr_constraints(&mut problem, &layout, scenario);
    Ok(BuiltProblem {
        problem,
        layout,
        epigraph_block: None,
    })
}

/// Power minimization under fixed sensing targets and the interference-
/// cancelling SINR constraints.
pub fn build_power_min_ic(
    scenario: &IsacScenario,
    targets: &PowerMinTargets,
) -> Result<BuiltProblem, SdpError> {
    let mut s = scenario.clone();
    s.interference_mode = InterferenceMode::Ic;
    build_power_min(&s, targets, false)
}

/// Power minimization without interference cancellation; the sensing
/// covariance lives in the orthogonal complement of the channels.
pub fn build_power_min_nic(
    scenario: &IsacScenario,
    targets: &PowerMinTargets,
) -> Result<BuiltProblem, SdpError> {
    let mut s = scenario.clone();
    s.interference_mode = InterferenceMode::Nic;
    build_power_min(&s, targets, true)
}

fn sym_entry(dim: usize, i: usize, j: usize) -> HermitianMatrix {
    let mut m = RealMatrix::zeros(dim, dim);
    if i == j {
        m[(i, i)] = 1.0;
    } else {
        m[(i, j)] = 0.5;
        m[(j, i)] = 0.5;
    }
    HermitianMatrix::from_real(&m)
}

/// Schur-complement epigraph of the BCRB: a real symmetric block
/// `[[D J D, I], [I, Ỹ]] ⪰ 0`, which forces `Ỹ ⪰ D⁻¹ J⁻¹ D⁻¹`, so that
/// `[J⁻¹]_ii ≤ d_i² Ỹ_ii`. The diagonal scaling `D` balances the entries.
fn add_bcrb_epigraph(
    problem: &mut ConicProblem,
    layout: &CovarianceLayout,
    bfim: &BfimSpec,
    scenario: &IsacScenario,
    scalarization: &Scalarization,
) -> Result<usize, SdpError> {
    let l = bfim.n_params();
    let n = scenario.geometry.n_tx;
    let g = bfim.gain();
    let c = bfim.prior_matrix().real_part();
    // Diagonal scaling from the BFIM at isotropic full power.
    let iso = HermitianMatrix::identity(n).scale(scenario.power_budget / n as f64);
    let j0 = crate::channel::assemble_bfim_from_gram(bfim, &iso)?;
    let d: Vec<f64> = (0..l)
        .map(|i| 1.0 / j0.matrix()[(i, i)].re.max(1e-300).sqrt())
        .collect();

    let e = problem.add_block("bcrb_epigraph", 2 * l, BlockKind::Symmetric);
    for i in 0..l {
        for k in i..l {
            let mut expr = LinearExpr::new().with_block(e, sym_entry(2 * l, i, k));
            let q = bfim.quad(i, k);
            if q.norm_fro() > 0.0 {
                expr.extend(layout.gram_expr(q).scaled(-g * d[i] * d[k]));
            }
            problem.add_constraint(
                expr,
                Sense::Eq,
                d[i] * d[k] * c[(i, k)],
                &format!("bfim_{i}_{k}"),
            );
        }
    }
    for i in 0..l {
        for k in 0..l {
            let expr = LinearExpr::new().with_block(e, sym_entry(2 * l, i, l + k));
            problem.add_constraint(
                expr,
                Sense::Eq,
                if i == k { 1.0 } else { 0.0 },
                &format!("link_{i}_{k}"),
            );
        }
    }
    match scalarization {
        Scalarization::MaxDiag => {
            // The epigraph variable is stored as t/τ to keep it of unit size.
            let tau = d.iter().map(|x| x * x).fold(0.0, f64::max);
            let t = problem.add_scalar("t_scaled", false);
            for (i, di) in d.iter().enumerate().take(l) {
                let expr = LinearExpr::new()
                    .with_scalar(t, 1.0)
                    .with_block(e, sym_entry(2 * l, l + i, l + i).scale(-di * di / tau));
                problem.add_constraint(expr, Sense::Ge, 0.0, &format!("maxdiag_{i}"));
            }
            problem.objective = LinearExpr::new().with_scalar(t, tau);
        }
        Scalarization::Trace => {
            let mut m = RealMatrix::zeros(2 * l, 2 * l);
            for i in 0..l {
                m[(l + i, l + i)] = d[i] * d[i];
            }
            problem.objective = LinearExpr::new().with_block(e, HermitianMatrix::from_real(&m));
        }
        other => return Err(SdpError::UnsupportedScalarization(format!("{other:?}"))),
    }
    Ok(e)
}

/// Sensing-optimal design under the SINR constraints and the power budget.
///
/// `Trace` and `MaxDiag` apply to the BFIM (for the zero-mean AoA metric,
/// to its diagonal angle information); `WeightedSum` maximizes a weighted
/// sum of the quadratic values. `LogDet` and `Custom` have no conic path.
pub fn build_sensing_design(
    metric: &SensingMetric,
    scenario: &IsacScenario,
    scalarization: &Scalarization,
) -> Result<BuiltProblem, SdpError> {
    let orthogonal = scenario.interference_mode == InterferenceMode::Nic;
    let mut problem = ConicProblem::new();
    let layout = CovarianceLayout::new(&mut problem, scenario, orthogonal)?;
    let mut epigraph_block = None;
    match scalarization {
        Scalarization::Trace | Scalarization::MaxDiag => {
            let bfim = metric.design_bfim()?.ok_or_else(|| {
                SdpError::UnsupportedScalarization(format!("{scalarization:?} needs a BFIM metric"))
            })?;
            epigraph_block = Some(add_bcrb_epigraph(
                &mut problem,
                &layout,
                &bfim,
                scenario,
                scalarization,
            )?);
        }
        Scalarization::WeightedSum(w) => {
            let spec = metric.quad_spec();
            if w.len() != spec.d() {
                return Err(SdpError::InvalidProblem(
                    "one weight per quadratic term is required".into(),
                ));
            }
            let mut obj = LinearExpr::new();
            for (q, &wi) in spec.q_matrices().iter().zip(w) {
                obj.extend(layout.gram_expr(q).scaled(-wi));
            }
            problem.objective = obj;
        }
        other => return Err(SdpError::UnsupportedScalarization(format!("{other:?}"))),
    }
    add_sinr_constraints(&mut problem, &layout, scenario);
    let power = layout.gram_expr(&HermitianMatrix::identity(scenario.geometry.n_tx));
    problem.add_constraint(power, Sense::Le, scenario.power_budget, "power");
    Ok(BuiltProblem {
        problem,
        layout,
        epigraph_block,
    })
}

/// Rank-one extraction `v_k = R_k h_k / √(h_k^H R_k h_k)`; the sensing
/// block factors the residual `R − Σ v_k v_k^H`.
pub fn extract_rank_one(
    r: &HermitianMatrix,
    r_k: &[HermitianMatrix],
    channels: &[ComplexVector],
    rank_tol: f64,
) -> Result<BeamformerMatrix, SdpError> {
    let n = r.dim();
    let k = r_k.len();
    if channels.len() != k {
        return Err(SdpError::InvalidProblem(
            "one channel per communication covariance is required".into(),
        ));
    }
    let mut comm = ComplexMatrix::zeros(n, k);
    let mut residual = r.clone();
    for (u, (rk, h)) in r_k.iter().zip(channels).enumerate() {
        let useful = rk.quad_form(h);
        if !(useful > 1e-12) {
            return Err(SdpError::ZeroUsefulPower { user: u });
        }
        let v = (rk.matrix() * h).unscale(useful.sqrt());
        residual = residual.sub(&HermitianMatrix::outer(&v));
        comm.set_column(u, &v);
    }
    let sensing = psd_factor_tolerant(&residual, rank_tol, r.norm_fro())?;
    Ok(BeamformerMatrix::from_parts(&comm, &sensing)?)
}

/// PSD factor that clips small negative eigenvalues left by inexact solves.
///
/// Tolerances are relative to `max(‖A‖₂, scale)`, so a residual that is
/// numerically zero against its parent matrix factors to zero columns.
pub fn psd_factor_tolerant(
    a: &HermitianMatrix,
    rank_tol: f64,
    scale: f64,
) -> Result<ComplexMatrix, SdpError> {
    let eig = crate::numerics::eig_hermitian(a)?;
    let reference = eig.spectral_norm().max(scale);
    let min_eig = eig.eigenvalues.first().copied().unwrap_or(0.0);
    if min_eig < -1e-6 * reference {
        return Err(NumericsError::NotPsd {
            min_eig,
            allowed: 1e-6 * reference,
        }
        .into());
    }
    let n = a.dim();
    let keep: Vec<usize> = (0..n)
        .rev()
        .filter(|&j| eig.eigenvalues[j] > rank_tol * reference)
        .collect();
    let mut f = ComplexMatrix::zeros(n, keep.len());
    for (c, &j) in keep.iter().enumerate() {
        f.set_column(
            c,
            &eig.eigenvectors.column(j).scale(eig.eigenvalues[j].sqrt()),
        );
    }
    Ok(f)
}

/// Solves a built design and extracts beamformers.
pub fn solve_and_extract(
    built: &BuiltProblem,
    scenario: &IsacScenario,
    opts: &SolverOptions,
    rank_tol: f64,
) -> Result<(SdpSolution, BeamformerMatrix), SdpError> {
    let sol = solve(&built.problem, opts)?;
    if sol.status != SolveStatus::Optimal {
        return Err(SdpError::NotSolved(sol.status));
    }
    let (rk, r) = built.layout.covariances(&sol);
    let v = extract_rank_one(&r, &rk, &scenario.channels, rank_tol)?;
    Ok((sol, v))
}

/// `Complex` helper for callers building coefficient matrices.
pub fn real(x: f64) -> Complex {
    Complex::new(x, 0.0)
}
