//! Dense complex-Hermitian linear algebra primitives.
//!
//! Every Hermitian eigenproblem is solved through the real symmetric
//! embedding `[[Re A, -Im A], [Im A, Re A]]`, whose spectrum is the spectrum
//! of `A` with every eigenvalue doubled.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;
use thiserror::Error;

/// Complex scalar used throughout the crate.
pub type Complex = Complex64;
/// Dense complex matrix.
pub type ComplexMatrix = DMatrix<Complex>;
/// Dense complex column vector.
pub type ComplexVector = DVector<Complex>;
/// Dense real matrix.
pub type RealMatrix = DMatrix<f64>;
/// Dense real column vector.
pub type RealVector = DVector<f64>;

/// Absolute tolerance for the Hermitian check at construction.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Default relative rank tolerance for factorizations.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 10_000;

/// Errors raised by the linear algebra layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    /// Matrix is not square or not Hermitian within tolerance.
    #[error("matrix is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    /// Zero-dimensional input.
    #[error("matrix dimension must be at least 1")]
    Empty,
    /// The symmetric eigensolver hit its iteration cap.
    #[error("eigendecomposition did not converge")]
    Convergence,
    /// Input has an eigenvalue below the allowed negative tolerance.
    #[error("matrix is not PSD (min eigenvalue {min_eig:.3e}, allowed {allowed:.3e})")]
    NotPsd { min_eig: f64, allowed: f64 },
    /// Rows expected to be orthonormal are not.
    #[error("rows are not orthonormal (deviation {deviation:.3e})")]
    RowsNotOrthonormal { deviation: f64 },
    /// Shape precondition violated.
    #[error("shape error: {0}")]
    Shape(String),
}

/// Square complex matrix equal to its conjugate transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    m: ComplexMatrix,
}

impl HermitianMatrix {
    /// Validates squareness and Hermitian symmetry within [`HERMITIAN_TOL`].
    pub fn new(m: ComplexMatrix) -> Result<Self, NumericsError> {
        if m.nrows() == 0 {
            return Err(NumericsError::Empty);
        }
        if m.nrows() != m.ncols() {
            return Err(NumericsError::Shape(format!(
                "expected square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let dev = hermitian_deviation(&m);
        if dev > HERMITIAN_TOL {
            return Err(NumericsError::NotHermitian { deviation: dev });
        }
        Ok(Self::symmetrize(m))
    }

    /// Projects a square matrix onto the Hermitian matrices, `(M + M^H)/2`.
    ///
    /// Panics if `m` is not square.
    pub fn symmetrize(m: ComplexMatrix) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "symmetrize needs a square matrix");
        let mh = m.adjoint();
        Self {
            m: (m + mh).scale(0.5),
        }
    }

    /// Embeds a real symmetric matrix (symmetrized).
    pub fn from_real(r: &RealMatrix) -> Self {
        Self::symmetrize(r.map(|x| Complex::new(x, 0.0)))
    }

    /// Zero matrix of size `n`.
    pub fn zeros(n: usize) -> Self {
        Self {
            m: ComplexMatrix::zeros(n, n),
        }
    }

    /// Identity matrix of size `n`.
    pub fn identity(n: usize) -> Self {
        Self {
            m: ComplexMatrix::identity(n, n),
        }
    }

    /// Outer product `v v^H`.
    pub fn outer(v: &ComplexVector) -> Self {
        Self { m: v * v.adjoint() }
    }

    /// Gram matrix `V V^H` of the columns of `v`.
    pub fn gram(v: &ComplexMatrix) -> Self {
        Self::symmetrize(v * v.adjoint())
    }

    /// Congruence `A X A^H`.
    pub fn congruence(&self, a: &ComplexMatrix) -> Self {
        Self::symmetrize(a * &self.m * a.adjoint())
    }

    /// Dimension of the matrix.
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Borrow the underlying dense matrix.
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.m
    }

    /// Consume into the underlying dense matrix.
    pub fn into_matrix(self) -> ComplexMatrix {
        self.m
    }

    /// Real part of `Tr(self * x)`; the exact trace for Hermitian `x`.
    pub fn inner(&self, x: &HermitianMatrix) -> f64 {
        trace_product(&self.m, &x.m).re
    }

    /// `Tr(self * x)` for an arbitrary square `x`.
    pub fn trace_with(&self, x: &ComplexMatrix) -> Complex {
        trace_product(&self.m, x)
    }

    /// Real quadratic form `v^H A v`.
    pub fn quad_form(&self, v: &ComplexVector) -> f64 {
        (v.adjoint() * &self.m * v)[(0, 0)].re
    }

    /// Trace (real for Hermitian input).
    pub fn trace(&self) -> f64 {
        self.m.diagonal().iter().map(|z| z.re).sum()
    }

    /// Frobenius norm.
    pub fn norm_fro(&self) -> f64 {
        self.m.norm()
    }

    /// Entrywise sum.
    pub fn add(&self, other: &HermitianMatrix) -> Self {
        Self {
            m: &self.m + &other.m,
        }
    }

    /// Entrywise difference.
    pub fn sub(&self, other: &HermitianMatrix) -> Self {
        Self {
            m: &self.m - &other.m,
        }
    }

    /// Multiplication by a real scalar.
    pub fn scale(&self, s: f64) -> Self {
        Self { m: self.m.scale(s) }
    }

    /// Real part of every entry (the matrix must be real symmetric for this
    /// to be meaningful).
    pub fn real_part(&self) -> RealMatrix {
        self.m.map(|z| z.re)
    }

    /// Largest absolute imaginary entry.
    pub fn max_imag(&self) -> f64 {
        self.m.iter().fold(0.0, |acc, z| acc.max(z.im.abs()))
    }

    /// Real symmetric embedding `[[Re A, -Im A], [Im A, Re A]]` of size `2n`.
    pub fn embed(&self) -> RealMatrix {
        embed_complex(&self.m)
    }

    /// Inverse of [`HermitianMatrix::embed`]: reads the left column blocks.
    pub fn from_embedding(e: &RealMatrix) -> Self {
        let n = e.nrows() / 2;
        let m = ComplexMatrix::from_fn(n, n, |i, j| Complex::new(e[(i, j)], e[(n + i, j)]));
        Self::symmetrize(m)
    }
}

/// Real embedding `[[Re A, -Im A], [Im A, Re A]]` of any complex matrix.
pub fn embed_complex(a: &ComplexMatrix) -> RealMatrix {
    let (r, c) = a.shape();
    RealMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = a[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// `Tr(A B)` without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex {
    let n = a.nrows();
    let mut acc = Complex::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

fn hermitian_deviation(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Ascending eigenvalues with a unitary matrix of eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl EigenSystem {
    /// Largest absolute eigenvalue (the spectral norm).
    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues
            .iter()
            .fold(0.0, |a: f64, &l| a.max(l.abs()))
    }

    /// Reassembles `Q diag(f(lambda)) Q^H`.
    pub fn reassemble_with(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let q = &self.eigenvectors;
        let mut scaled = q.clone();
        for (j, &l) in self.eigenvalues.iter().enumerate() {
            let s = f(l);
            scaled.column_mut(j).scale_mut(s);
        }
        HermitianMatrix::symmetrize(scaled * q.adjoint())
    }
}

/// Real symmetric eigendecomposition with ascending eigenvalues.
pub fn eig_symmetric(a: &RealMatrix) -> Result<(Vec<f64>, RealMatrix), NumericsError> {
    let n = a.nrows();
    if n == 0 {
        return Err(NumericsError::Empty);
    }
    let sym = (a + a.transpose()).scale(0.5);
    let eig =
        SymmetricEigen::try_new(sym, EIG_EPS, EIG_MAX_ITER).ok_or(NumericsError::Convergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = RealMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Hermitian eigendecomposition via the real symmetric embedding.
///
/// The embedded spectrum is paired into `n` complex eigenvalues; eigenvectors
/// of (nearly) repeated eigenvalues are grouped and an orthonormal basis of
/// their complex span is recovered by pivoted Gram-Schmidt on the mapped
/// vectors.
pub fn eig_hermitian(a: &HermitianMatrix) -> Result<EigenSystem, NumericsError> {
    let n = a.dim();
    let (mu, w) = eig_symmetric(&a.embed())?;
    let scale = mu.iter().fold(1.0_f64, |acc, l| acc.max(l.abs()));
    let lambda: Vec<f64> = (0..n).map(|k| 0.5 * (mu[2 * k] + mu[2 * k + 1])).collect();
    let cluster_tol = 1e-9 * scale;

    let mut vectors = ComplexMatrix::zeros(n, n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && lambda[end] - lambda[end - 1] <= cluster_tol {
            end += 1;
        }
        let m = end - start;
        let z = ComplexMatrix::from_fn(n, 2 * m, |r, c| {
            let col = 2 * start + c;
            Complex::new(w[(r, col)], w[(n + r, col)])
        });
        let basis = if m == 1 {
            let mut v = z.column(0).into_owned();
            let nv = v.norm();
            v.unscale_mut(nv);
            ComplexMatrix::from_columns(&[v])
        } else {
            pivoted_basis(&z, m)?
        };
        for c in 0..m {
            vectors.set_column(start + c, &basis.column(c));
        }
        start = end;
    }
    Ok(EigenSystem {
        eigenvalues: lambda,
        eigenvectors: vectors,
    })
}

/// Orthonormal basis of the `m` dominant directions of the columns of `z`
/// by Gram-Schmidt with column pivoting.
fn pivoted_basis(z: &ComplexMatrix, m: usize) -> Result<ComplexMatrix, NumericsError> {
    let mut rest: Vec<ComplexVector> = z.column_iter().map(|c| c.into_owned()).collect();
    let mut out: Vec<ComplexVector> = Vec::with_capacity(m);
    for _ in 0..m {
        let (best, norm) = rest
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or(NumericsError::Convergence)?;
        if !(norm > 0.0) {
            return Err(NumericsError::Convergence);
        }
        let mut q = rest.swap_remove(best).unscale(norm);
        for prev in &out {
            let p = prev.dotc(&q);
            q -= prev * p;
        }
        q.unscale_mut(q.norm());
        for v in rest.iter_mut() {
            for _ in 0..2 {
                let p = q.dotc(v);
                *v -= &q * p;
            }
        }
        out.push(q);
    }
    Ok(ComplexMatrix::from_columns(&out))
}

/// Unitary polar factor `A (A^H A)^{-1/2}` of a square nonsingular matrix.
pub fn unitary_polar(a: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    if !a.is_square() {
        return Err(NumericsError::Shape(format!(
            "polar factor needs a square matrix, got {:?}",
            a.shape()
        )));
    }
    let g = HermitianMatrix::gram(&a.adjoint());
    Ok(a * inv_sqrt_pd(&g)?.matrix())
}

/// Factor `A ≈ F F^H` keeping eigenvalues above `rank_tol · ‖A‖₂`.
///
/// Columns are ordered by decreasing eigenvalue. A zero matrix yields a
/// factor with no columns.
pub fn psd_factor(a: &HermitianMatrix, rank_tol: f64) -> Result<ComplexMatrix, NumericsError> {
    let eig = eig_hermitian(a)?;
    let norm = eig.spectral_norm();
    let min = eig.eigenvalues[0];
    let allowed = rank_tol * norm;
    if min < -allowed {
        return Err(NumericsError::NotPsd {
            min_eig: min,
            allowed,
        });
    }
    let n = a.dim();
    let keep: Vec<usize> = (0..n)
        .rev()
        .filter(|&j| eig.eigenvalues[j] > allowed && norm > 0.0)
        .collect();
    let mut f = ComplexMatrix::zeros(n, keep.len());
    for (c, &j) in keep.iter().enumerate() {
        let s = eig.eigenvalues[j].sqrt();
        f.set_column(c, &eig.eigenvectors.column(j).scale(s));
    }
    Ok(f)
}

/// Projection onto the PSD cone (eigenvalue clipping).
pub fn project_psd(a: &HermitianMatrix) -> Result<HermitianMatrix, NumericsError> {
    Ok(eig_hermitian(a)?.reassemble_with(|l| l.max(0.0)))
}

/// Numerical rank: eigenvalues above `rel_tol · ‖A‖₂`.
pub fn hermitian_rank(a: &HermitianMatrix, rel_tol: f64) -> Result<usize, NumericsError> {
    let eig = eig_hermitian(a)?;
    let norm = eig.spectral_norm();
    if norm == 0.0 {
        return Ok(0);
    }
    Ok(eig
        .eigenvalues
        .iter()
        .filter(|&&l| l > rel_tol * norm)
        .count())
}

/// Right singular vectors of `m` padded to a square matrix, with the
/// singular values, sorted by increasing singular value.
fn right_singular_ascending(m: &RealMatrix) -> Result<(Vec<f64>, RealMatrix), NumericsError> {
    let (rows, cols) = m.shape();
    let n = rows.max(cols);
    let mut sq = RealMatrix::zeros(n, cols);
    sq.view_mut((0, 0), (rows, cols)).copy_from(m);
    let svd =
        SVD::try_new(sq, false, true, EIG_EPS, EIG_MAX_ITER).ok_or(NumericsError::Convergence)?;
    let vt = svd.v_t.ok_or(NumericsError::Convergence)?;
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let v = RealMatrix::from_fn(cols, cols, |r, c| vt[(order[c], r)]);
    Ok((values, v))
}

/// Nonzero `x` with `M x ≈ 0` for a wide real matrix (`m < n`).
///
/// The result is the right singular vector of smallest singular value,
/// scaled so that its largest-magnitude entry equals `+1`.
pub fn real_nullspace_vector(m: &RealMatrix) -> Result<RealVector, NumericsError> {
    let (rows, cols) = m.shape();
    if rows >= cols {
        return Err(NumericsError::Shape(format!(
            "null space vector needs rows < cols, got {rows}x{cols}"
        )));
    }
    let (_, v) = right_singular_ascending(m)?;
    Ok(normalize_inf(v.column(0).into_owned()))
}

/// Orthonormal basis (columns) of the numerical null space of `m`, using
/// singular values `≤ rel_tol · σ_max`. Columns are ordered by increasing
/// singular value.
pub fn real_nullspace_basis(m: &RealMatrix, rel_tol: f64) -> Result<RealMatrix, NumericsError> {
    let cols = m.ncols();
    if cols == 0 {
        return Err(NumericsError::Empty);
    }
    let (s, v) = right_singular_ascending(m)?;
    let smax = s.iter().fold(0.0_f64, |a, &x| a.max(x));
    let structural = cols.saturating_sub(m.nrows());
    let k = s
        .iter()
        .enumerate()
        .filter(|&(i, &x)| i < structural || x <= rel_tol * smax)
        .count()
        .max(structural);
    Ok(v.columns(0, k).into_owned())
}

/// Scale so that the largest-magnitude entry becomes `+1`.
pub fn normalize_inf(mut x: RealVector) -> RealVector {
    let mut best = 0usize;
    for i in 0..x.len() {
        if x[i].abs() > x[best].abs() {
            best = i;
        }
    }
    let s = x[best];
    if s != 0.0 {
        x.unscale_mut(s);
    }
    x
}

/// Rows spanning the orthogonal complement of the row space of `b`.
///
/// `b` must have orthonormal rows and fewer rows than columns. The stacked
/// matrix `[b; result]` is unitary.
pub fn orthonormal_complement(b: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    let (r, n) = b.shape();
    if r >= n {
        return Err(NumericsError::Shape(format!(
            "complement needs rows < cols, got {r}x{n}"
        )));
    }
    let gram = b * b.adjoint();
    let dev = (gram - ComplexMatrix::identity(r, r)).norm();
    if dev > 1e-9 {
        return Err(NumericsError::RowsNotOrthonormal { deviation: dev });
    }
    let proj = HermitianMatrix::symmetrize(ComplexMatrix::identity(n, n) - b.adjoint() * b);
    let eig = eig_hermitian(&proj)?;
    // Projector eigenvalues are 0 (r times) then 1 (n - r times).
    let cols: Vec<ComplexVector> = (r..n)
        .map(|j| eig.eigenvectors.column(j).into_owned())
        .collect();
    let basis = ComplexMatrix::from_columns(&cols);
    let basis = orthonormalize_columns(&basis);
    Ok(basis.adjoint())
}

/// Orthonormal basis of the column space (modified Gram-Schmidt, applied
/// twice). Columns that fall below `1e-10` relative norm are dropped.
pub fn orthonormalize_columns(a: &ComplexMatrix) -> ComplexMatrix {
    let scale = a.column_iter().fold(0.0_f64, |m, c| m.max(c.norm()));
    let mut out: Vec<ComplexVector> = Vec::new();
    for c in a.column_iter() {
        let mut v = c.into_owned();
        for _ in 0..2 {
            for q in &out {
                let p = q.dotc(&v);
                v -= q * p;
            }
        }
        let nv = v.norm();
        if nv > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            out.push(v.unscale(nv));
        }
    }
    if out.is_empty() {
        return ComplexMatrix::zeros(a.nrows(), 0);
    }
    ComplexMatrix::from_columns(&out)
}

/// Inverse square root of a Hermitian positive definite matrix.
pub fn inv_sqrt_pd(a: &HermitianMatrix) -> Result<HermitianMatrix, NumericsError> {
    let eig = eig_hermitian(a)?;
    let min = eig.eigenvalues[0];
    if min <= 0.0 {
        return Err(NumericsError::NotPsd {
            min_eig: min,
            allowed: 0.0,
        });
    }
    Ok(eig.reassemble_with(|l| 1.0 / l.sqrt()))
}

/// Solve the real linear system `a x = b` for a square invertible `a`.
pub fn solve_real(a: &RealMatrix, b: &RealVector) -> Option<RealVector> {
    a.clone().lu().solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    #[test]
    fn embedding_round_trip() {
        let m = ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(2.0, -1.0), c(2.0, 1.0), c(-3.0, 0.0)],
        );
        let h = HermitianMatrix::new(m.clone()).unwrap();
        let back = HermitianMatrix::from_embedding(&h.embed());
        assert!((back.matrix() - m).norm() < 1e-15);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        );
        assert!(matches!(
            HermitianMatrix::new(m),
            Err(NumericsError::NotHermitian { .. })
        ));
    }

    #[test]
    fn repeated_eigenvalues_yield_unitary_basis() {
        let eig = eig_hermitian(&HermitianMatrix::identity(3)).unwrap();
        let q = &eig.eigenvectors;
        assert!((q.adjoint() * q - ComplexMatrix::identity(3, 3)).norm() < 1e-12);
        assert!(eig.eigenvalues.iter().all(|l| (l - 1.0).abs() < 1e-14));
    }
}
