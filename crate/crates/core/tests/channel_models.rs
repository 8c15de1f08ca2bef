//! Channel and BFIM builders against direct evaluations.

mod common;

use common::*;
use isac_core::channel::*;
use isac_core::numerics::{eig_hermitian, Complex, ComplexMatrix, HermitianMatrix, RealMatrix};
use std::f64::consts::PI;

#[test]
fn steering_vector_examples() {
    let g = ArrayGeometry::new(4, 1).unwrap();
    let a = steering_vector(&g, 0.0, Side::Tx);
    for z in a.iter() {
        assert!((z - c(0.5, 0.0)).norm() < 1e-15);
    }
    let g8 = ArrayGeometry::new(8, 3).unwrap();
    let theta = PI / 6.0;
    let a = steering_vector(&g8, theta, Side::Tx);
    for n in 0..8 {
        let phase = PI * (n as f64 - 3.5) * theta.sin();
        let want = Complex::from_polar(1.0 / 8f64.sqrt(), phase);
        assert!((a[n] - want).norm() < 1e-14);
    }
    for t in [-1.2, -0.3, 0.0, 0.7, 1.4] {
        assert!((steering_vector(&g8, t, Side::Rx).norm() - 1.0).abs() < 1e-14);
    }
}

fn fd_derivative(g: &ArrayGeometry, theta: f64, side: Side) -> isac_core::numerics::ComplexVector {
    let h = 1e-6;
    (steering_vector(g, theta + h, side) - steering_vector(g, theta - h, side)).unscale(2.0 * h)
}

#[test]
fn steering_derivative_examples() {
    let g = ArrayGeometry::new(4, 1).unwrap();
    let d = steering_derivative(&g, 0.0, Side::Tx);
    assert!((d.norm_squared() - 15.0 * PI * PI / 12.0).abs() < 1e-12);
    assert!((fd_derivative(&g, 0.0, Side::Tx).norm_squared() - 15.0 * PI * PI / 12.0).abs() < 1e-4);

    let g2 = ArrayGeometry::new(2, 1).unwrap();
    let t = PI / 3.0;
    let want = PI * PI * 0.25 * 3.0 / 12.0;
    assert!((steering_derivative(&g2, t, Side::Tx).norm_squared() - want).abs() < 1e-12);
    assert!((fd_derivative(&g2, t, Side::Tx).norm_squared() - want).abs() < 1e-4);

    let g8 = ArrayGeometry::new(8, 5).unwrap();
    for t in [-0.9, 0.1, 0.6] {
        for side in [Side::Tx, Side::Rx] {
            let a = steering_vector(&g8, t, side);
            let d = steering_derivative(&g8, t, side);
            assert!(d.dotc(&a).norm() < 1e-13);
            assert!((d - fd_derivative(&g8, t, side)).norm() < 1e-6);
        }
    }
}

fn embedded_block(r: &HermitianMatrix) -> RealMatrix {
    let n = r.dim();
    let m = r.matrix();
    RealMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let (bi, ii) = (i / n, i % n);
        let (bj, jj) = (j / n, j % n);
        let z = m[(ii, jj)];
        match (bi, bj) {
            (0, 0) | (1, 1) => z.re,
            (0, 1) => z.im,
            _ => -z.im,
        }
    })
}

#[test]
fn full_channel_basis_for_two_antennas() {
    let g = ArrayGeometry::new(2, 1).unwrap();
    let (_, q) = build_full_channel_bfim(&g, &[1.0, 1.0], 1, 1.0).unwrap();
    assert_eq!(q.d(), 4);
    let m = |a: [[Complex; 2]; 2]| ComplexMatrix::from_fn(2, 2, |i, j| a[i][j]);
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    let want = [
        m([[o, z], [z, z]]),
        m([[z, z], [z, o]]),
        m([[z, o], [o, z]]),
        m([[z, i], [-i, z]]),
    ];
    for w in want {
        assert!(
            q.q_matrices()
                .iter()
                .any(|x| (x.matrix() - &w).norm() < 1e-14),
            "missing basis element {w}"
        );
    }
}

#[test]
fn full_channel_bfim_matches_kronecker_form() {
    let (nt, nr, snaps, noise) = (3, 2, 4, 0.5);
    let g = ArrayGeometry::new(nt, nr).unwrap();
    let s0 = 0.7;
    let (spec, q) = build_full_channel_bfim(&g, &vec![s0; nt * nr], snaps, noise).unwrap();
    assert_eq!(q.d(), nt * nt);
    assert_eq!(spec.n_params(), 2 * nt * nr);
    let j0 = assemble_bfim(&spec, &ComplexMatrix::zeros(nt, 2)).unwrap();
    assert!((j0.real_part() - RealMatrix::identity(2 * nt * nr, 2 * nt * nr) / s0).norm() < 1e-12);

    let mut r = rng(5);
    let v = gaussian_matrix(&mut r, nt, 3);
    let j = assemble_bfim(&spec, &v).unwrap();
    let blk = embedded_block(&HermitianMatrix::gram(&v)) * (2.0 * snaps as f64 / noise);
    let mut want = RealMatrix::identity(2 * nt * nr, 2 * nt * nr) / s0;
    for rr in 0..nr {
        let o = rr * 2 * nt;
        let mut view = want.view_mut((o, o), (2 * nt, 2 * nt));
        view += &blk;
    }
    assert!((j.real_part() - &want).norm() <= 1e-10 * want.norm());
}

#[test]
fn bfim_is_linear_in_the_gram_and_snapshots() {
    let g = ArrayGeometry::new(4, 4).unwrap();
    let priors = [TargetPrior::new(c(0.8, 0.3), 0.4, 0.2, 0.03).unwrap()];
    let (spec, _) = build_multitarget_bfim(&g, &priors, 5, 1.0, 15).unwrap();
    let mut r = rng(8);
    let (v1, v2) = (gaussian_matrix(&mut r, 4, 2), gaussian_matrix(&mut r, 4, 3));
    let stacked =
        ComplexMatrix::from_fn(4, 5, |i, j| if j < 2 { v1[(i, j)] } else { v2[(i, j - 2)] });
    let c0 = spec.prior_matrix().real_part();
    let t = |v: &ComplexMatrix| assemble_bfim(&spec, v).unwrap().real_part() - &c0;
    let sum = t(&v1) + t(&v2);
    assert!((t(&stacked) - &sum).norm() <= 1e-12 * sum.norm());
    assert!((t(&v1.scale(2f64.sqrt())) - t(&v1) * 2.0).norm() <= 1e-12 * sum.norm());
    let doubled = spec.with_snapshots(10);
    let t2 = assemble_bfim(&doubled, &v1).unwrap().real_part() - &c0;
    assert!((t2 - t(&v1) * 2.0).norm() <= 1e-12 * sum.norm());
}

/// Fisher information of the noiseless echo for fixed parameters, with the
/// angle derivative taken by central differences.
fn point_mass_fisher(
    g: &ArrayGeometry,
    alphas: &[Complex],
    thetas: &[f64],
    r: &HermitianMatrix,
    gain: f64,
) -> RealMatrix {
    let nt = alphas.len();
    let h = 1e-6;
    let mut derivs: Vec<ComplexMatrix> = Vec::new();
    for &th in &thetas[..nt] {
        derivs.push(array_response(g, th));
    }
    for &th in &thetas[..nt] {
        derivs.push(array_response(g, th).map(|z| z * c(0.0, 1.0)));
    }
    for i in 0..nt {
        let fd =
            (array_response(g, thetas[i] + h) - array_response(g, thetas[i] - h)).unscale(2.0 * h);
        derivs.push(fd.map(|z| z * alphas[i]));
    }
    let l = 3 * nt;
    RealMatrix::from_fn(l, l, |p, q| {
        2.0 * gain * (derivs[p].adjoint() * &derivs[q] * r.matrix()).trace().re
    })
}

#[test]
fn multitarget_bfim_matches_point_mass_evaluation() {
    let g = ArrayGeometry::new(6, 5).unwrap();
    let alphas = [c(0.9, -0.4), c(-0.3, 1.1)];
    let thetas = [-0.4, 0.5];
    let priors: Vec<TargetPrior> = alphas
        .iter()
        .zip(thetas)
        .map(|(&a, t)| TargetPrior::new(a, 1e-12, t, 1e-6).unwrap())
        .collect();
    let (spec, q) = build_multitarget_bfim(&g, &priors, 10, 2.0, 15).unwrap();
    assert_eq!(q.d(), multitarget_d(2));
    let mut rg = rng(2);
    let r = HermitianMatrix::gram(&gaussian_matrix(&mut rg, 6, 3));
    let t =
        assemble_bfim_from_gram(&spec, &r).unwrap().real_part() - spec.prior_matrix().real_part();
    let want = point_mass_fisher(&g, &alphas, &thetas, &r, 10.0 / 2.0);
    assert!(
        (&t - &want).norm() <= 1e-6 * want.norm(),
        "{}",
        (&t - &want).norm() / want.norm()
    );
}

#[test]
fn multitarget_d_counts() {
    let g = ArrayGeometry::new(8, 8).unwrap();
    for (n, d) in [(1, 4), (2, 15), (3, 33)] {
        let priors: Vec<TargetPrior> = (0..n)
            .map(|i| TargetPrior::new(c(1.0, 0.2), 0.5, -0.6 + 0.5 * i as f64, 0.02).unwrap())
            .collect();
        let (_, q) = build_multitarget_bfim(&g, &priors, 10, 1.0, 15).unwrap();
        assert_eq!(q.d(), d);
        assert_eq!(multitarget_d(n), d);
    }
}

#[test]
fn multitarget_structure() {
    let g = ArrayGeometry::new(6, 6).unwrap();
    let priors = [
        TargetPrior::new(c(0.7, 0.7), 0.3, -0.3, 0.05).unwrap(),
        TargetPrior::new(c(1.0, -0.2), 0.6, 0.4, 0.05).unwrap(),
    ];
    let (spec, _) = build_multitarget_bfim(&g, &priors, 10, 1.0, 15).unwrap();
    let nt = 2;
    for i in 0..nt {
        // Re α / Im α cross block has a zero diagonal; Re-Re equals Im-Im.
        assert!(spec.quad(i, nt + i).norm_fro() < 1e-12);
        for j in i..nt {
            assert!(spec.quad(i, j).sub(spec.quad(nt + i, nt + j)).norm_fro() < 1e-12);
        }
    }
}

#[test]
fn aoa_only_spec() {
    let g = ArrayGeometry::new(6, 4).unwrap();
    let priors: Vec<TargetPrior> = [-0.5, 0.1, 0.6]
        .iter()
        .map(|&t| TargetPrior::new(c(0.0, 0.0), 0.8, t, 0.04).unwrap())
        .collect();
    let spec = build_aoa_only_spec(&g, &priors, 10, 1.0, 15).unwrap();
    assert_eq!(spec.quad.d(), 3);
    for q in spec.quad.q_matrices() {
        assert!(eig_hermitian(q).unwrap().eigenvalues[0] >= -1e-10 * q.norm_fro());
    }
    let one = build_aoa_only_spec(&g, &priors[..1], 10, 1.0, 15).unwrap();
    assert_eq!(one.quad.d(), 1);

    // With zero means the angle rows of the full BFIM decouple from α.
    let (full, _) = build_multitarget_bfim(&g, &priors, 10, 1.0, 15).unwrap();
    let mut r = rng(4);
    let j = assemble_bfim(&full, &gaussian_matrix(&mut r, 6, 4))
        .unwrap()
        .real_part();
    for t in 0..3 {
        for p in 0..6 {
            assert!(j[(6 + t, p)].abs() <= 1e-8 * j.norm());
        }
    }
    let nonzero = [TargetPrior::new(c(0.5, 0.0), 0.8, 0.0, 0.04).unwrap()];
    assert!(matches!(
        build_aoa_only_spec(&g, &nonzero, 10, 1.0, 15),
        Err(ChannelError::NonzeroMean { index: 0 })
    ));
}

#[test]
fn independence_check() {
    let basis = canonical_hermitian_basis(3);
    assert!(QuadraticMetricSpec::new(basis.clone(), Scalarization::Trace).is_ok());
    let mut dup = basis.clone();
    dup.push(basis[4].clone());
    assert!(matches!(
        QuadraticMetricSpec::new(dup, Scalarization::Trace),
        Err(ChannelError::LinearlyDependent { .. })
    ));
}

#[test]
fn hermitian_coordinates_are_orthonormal() {
    let mut r = rng(10);
    let a = gaussian_matrix(&mut r, 4, 4);
    let b = gaussian_matrix(&mut r, 4, 4);
    let (x, y) = (
        HermitianMatrix::symmetrize(&a + a.adjoint()),
        HermitianMatrix::symmetrize(&b + b.adjoint()),
    );
    let (cx, cy) = (hermitian_coords(&x), hermitian_coords(&y));
    assert_eq!(cx.len(), 16);
    assert!((cx.dot(&cy) - x.inner(&y)).abs() < 1e-10);
    assert!(hermitian_from_coords(cx.as_slice(), 4).sub(&x).norm_fro() < 1e-12);
}
