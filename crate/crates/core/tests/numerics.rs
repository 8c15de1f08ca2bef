//! Linear-algebra kernels checked by reconstruction and unitarity oracles.

mod common;

use common::*;
use isac_core::numerics::{
    eig_hermitian, normalize_inf, orthonormal_complement, psd_factor, real_nullspace_vector,
    ComplexMatrix, HermitianMatrix, NumericsError, RealMatrix,
};
use proptest::prelude::*;

fn random_hermitian(seed: u64, n: usize) -> HermitianMatrix {
    let mut r = rng(seed);
    let a = gaussian_matrix(&mut r, n, n);
    HermitianMatrix::symmetrize(&a + a.adjoint())
}

fn reconstruction_residual(a: &HermitianMatrix) -> f64 {
    let e = eig_hermitian(a).unwrap();
    let back = e.reassemble_with(|l| l);
    a.sub(&back).norm_fro() / a.norm_fro().max(1.0)
}

#[test]
fn eig_of_identity_and_diagonal() {
    let e = eig_hermitian(&HermitianMatrix::identity(3)).unwrap();
    for l in &e.eigenvalues {
        assert!((l - 1.0).abs() < 1e-12);
    }
    let d = HermitianMatrix::from_real(&RealMatrix::from_diagonal(&nalgebra::DVector::from_vec(
        vec![2.0, -1.0],
    )));
    let e = eig_hermitian(&d).unwrap();
    assert!((e.eigenvalues[0] + 1.0).abs() < 1e-12 && (e.eigenvalues[1] - 2.0).abs() < 1e-12);
}

#[test]
fn eig_random_reconstructs_with_unitary_vectors() {
    let a = random_hermitian(7, 8);
    assert!(reconstruction_residual(&a) <= 1e-9);
    let q = &eig_hermitian(&a).unwrap().eigenvectors;
    assert!((q.adjoint() * q - ComplexMatrix::identity(8, 8)).norm() <= 1e-10);
    let e = eig_hermitian(&a).unwrap();
    assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn psd_factor_examples() {
    let e1 = {
        let mut v = nalgebra::DVector::zeros(2);
        v[0] = c(1.0, 0.0);
        v
    };
    let f = psd_factor(&HermitianMatrix::outer(&e1), 1e-8).unwrap();
    assert_eq!(f.ncols(), 1);
    assert!((f[(0, 0)].norm() - 1.0).abs() < 1e-12 && f[(1, 0)].norm() < 1e-12);

    let f = psd_factor(&HermitianMatrix::identity(4), 1e-8).unwrap();
    assert_eq!(f.ncols(), 4);
    assert!((f.adjoint() * &f - ComplexMatrix::identity(4, 4)).norm() < 1e-10);

    let mut r = rng(3);
    let f0 = gaussian_matrix(&mut r, 5, 2);
    let a = HermitianMatrix::gram(&f0);
    let f = psd_factor(&a, 1e-8).unwrap();
    assert_eq!(f.ncols(), 2);
    assert!(a.sub(&HermitianMatrix::gram(&f)).norm_fro() <= 10.0 * 1e-8 * a.norm_fro());
    // Same span: projecting F0 onto span(F) loses nothing.
    let q = f.clone().qr().q();
    assert!((&f0 - &q * (q.adjoint() * &f0)).norm() < 1e-9);
}

#[test]
fn psd_factor_rejects_indefinite() {
    let d = HermitianMatrix::from_real(&RealMatrix::from_diagonal(&nalgebra::DVector::from_vec(
        vec![1.0, -0.5],
    )));
    assert!(matches!(
        psd_factor(&d, 1e-8),
        Err(NumericsError::NotPsd { .. })
    ));
}

#[test]
fn nullspace_examples() {
    let m = RealMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let x = real_nullspace_vector(&m).unwrap();
    assert!(x[0].abs() < 1e-12 && (x[1].abs() - 1.0).abs() < 1e-12);

    let x = real_nullspace_vector(&RealMatrix::zeros(2, 3)).unwrap();
    assert!((x.amax() - 1.0).abs() < 1e-12);

    let mut r = rng(9);
    let m = RealMatrix::from_fn(5, 9, |_, _| rand::Rng::random_range(&mut r, -1.0..1.0));
    let x = real_nullspace_vector(&m).unwrap();
    assert!((&m * &x).norm() <= 1e-9 * m.norm() * x.norm());
    assert!((x.amax() - 1.0).abs() < 1e-12);
    assert_eq!(normalize_inf(x.clone()), x);
}

#[test]
fn complement_examples() {
    let b = ComplexMatrix::from_row_slice(1, 2, &[c(1.0, 0.0), c(0.0, 0.0)]);
    let q = orthonormal_complement(&b).unwrap();
    assert_eq!(q.nrows(), 1);
    assert!(q[(0, 0)].norm() < 1e-12 && (q[(0, 1)].norm() - 1.0).abs() < 1e-12);

    let bad = ComplexMatrix::from_row_slice(1, 2, &[c(2.0, 0.0), c(0.0, 0.0)]);
    assert!(orthonormal_complement(&bad).is_err());
}

fn stacked_unitarity(seed: u64, n: usize, k: usize) -> f64 {
    let mut r = rng(seed);
    let u = gaussian_matrix(&mut r, n, n).qr().q();
    let b = u.rows(0, k).into_owned();
    let q = orthonormal_complement(&b).unwrap();
    let mut x = ComplexMatrix::zeros(n, n);
    x.rows_mut(0, k).copy_from(&b);
    x.rows_mut(k, n - k).copy_from(&q);
    (&x * x.adjoint() - ComplexMatrix::identity(n, n)).norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eig_reconstructs_any_hermitian(seed in any::<u64>(), n in 1usize..10) {
        prop_assert!(reconstruction_residual(&random_hermitian(seed, n)) <= 1e-9);
    }

    #[test]
    fn psd_factor_never_overshoots(seed in any::<u64>(), n in 2usize..8, rank in 1usize..4) {
        let mut r = rng(seed);
        let f0 = gaussian_matrix(&mut r, n, rank.min(n));
        let a = HermitianMatrix::gram(&f0);
        let f = psd_factor(&a, 1e-8).unwrap();
        let gap = a.sub(&HermitianMatrix::gram(&f));
        let min = eig_hermitian(&gap).unwrap().eigenvalues[0];
        let norm = eig_hermitian(&a).unwrap().spectral_norm();
        prop_assert!(min >= -10.0 * 1e-8 * norm);
        prop_assert_eq!(f.ncols(), rank.min(n));
    }

    #[test]
    fn complement_completes_a_unitary(seed in any::<u64>(), n in 2usize..9, k in 1usize..8) {
        prop_assume!(k < n);
        prop_assert!(stacked_unitarity(seed, n, k) <= 1e-8);
    }
}
