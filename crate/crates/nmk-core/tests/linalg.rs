use nalgebra::{DMatrix, SymmetricEigen};
use nmk_core::linalg::{hermitian_eigen, symmetric_tridiagonal_eigen, trace_distance, CMat};
use nmk_core::quad::{adaptive, gauss_legendre, Rule};
use nmk_core::C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMat {
    let mut m = CMat::zeros(n);
    for i in 0..n {
        m.set(i, i, C64::new(rng.random_range(-1.0..1.0), 0.0));
        for j in i + 1..n {
            let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            m.set(i, j, z);
            m.set(j, i, z.conj());
        }
    }
    m
}

fn to_nalgebra(m: &CMat) -> DMatrix<nalgebra::Complex<f64>> {
    let n = m.dim();
    DMatrix::from_fn(n, n, |i, j| {
        let z = m.get(i, j);
        nalgebra::Complex::new(z.re, z.im)
    })
}

#[test]
fn tridiagonal_matches_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in [1, 2, 5, 17, 40] {
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let e: Vec<f64> = (1..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let (vals, vecs) = symmetric_tridiagonal_eigen(&d, &e, true).unwrap();
        let dense = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                d[i]
            } else if i + 1 == j {
                e[i]
            } else if j + 1 == i {
                e[j]
            } else {
                0.0
            }
        });
        let mut reference: Vec<f64> = SymmetricEigen::new(dense.clone()).eigenvalues.iter().copied().collect();
        reference.sort_by(f64::total_cmp);
        for (a, b) in vals.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        for k in 0..n {
            let v = nalgebra::DVector::from_fn(n, |i, _| vecs[i * n + k]);
            let r = &dense * &v - &v * vals[k];
            assert!(r.norm() < 1e-12);
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn hermitian_jacobi_matches_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1, 2, 3, 8, 16] {
        let m = random_hermitian(n, &mut rng);
        let (vals, vecs) = hermitian_eigen(&m, true).unwrap();
        let mut reference: Vec<f64> = to_nalgebra(&m).symmetric_eigenvalues().iter().copied().collect();
        reference.sort_by(f64::total_cmp);
        let mut sorted = vals.clone();
        sorted.sort_by(f64::total_cmp);
        for (a, b) in sorted.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-11, "{a} vs {b}");
        }
        let v = vecs.unwrap();
        let recon = &(&v * &CMat::diagonal(&vals.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>())) * &v.adjoint();
        assert!((&recon - &m).frobenius() < 1e-11);
    }
}

#[test]
fn operator_norm_of_pauli_and_shift() {
    let sx = CMat::from_real(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
    assert!((sx.op_norm() - 1.0).abs() < 1e-14);
    let lower = CMat::from_real(2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
    assert!((lower.op_norm() - 1.0).abs() < 1e-14);
    assert!((sx.commutator(&lower).op_norm() - 1.0).abs() < 1e-14);
}

#[test]
fn trace_distance_of_orthogonal_pure_states_is_one() {
    let a = CMat::from_real(2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
    let b = CMat::from_real(2, &[0.0, 0.0, 0.0, 1.0]).unwrap();
    assert!((trace_distance(&a, &b).unwrap() - 1.0).abs() < 1e-14);
    let plus = CMat::from_real(2, &[0.5, 0.5, 0.5, 0.5]).unwrap();
    assert!((trace_distance(&a, &plus).unwrap() - 0.5f64.sqrt()).abs() < 1e-13);
}

#[test]
fn gauss_legendre_low_orders_are_exact() {
    let (x, w) = gauss_legendre(1);
    assert_eq!(x, vec![0.0]);
    assert!((w[0] - 2.0).abs() < 1e-15);
    let (x, w) = gauss_legendre(2);
    assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    assert!((w[0] - 1.0).abs() < 1e-15);
    let (x, w) = gauss_legendre(3);
    assert!((x[2] - 0.6f64.sqrt()).abs() < 1e-15);
    assert!(x[1].abs() < 1e-15);
    assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
}

#[test]
fn gauss_legendre_integrates_up_to_degree_2n_minus_1() {
    for n in [4, 16, 24] {
        let (x, w) = gauss_legendre(n);
        for k in 0..2 * n {
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((got - exact).abs() < 1e-13, "n={n} k={k}");
        }
    }
}

#[test]
fn composite_and_adaptive_rules() {
    let r = Rule::uniform(0.0, std::f64::consts::PI, 8, 16);
    assert!((r.integrate(|x: f64| x.sin()) - 2.0).abs() < 1e-14);
    let v: f64 = adaptive(|x: f64| 1.0 / (1.0 + x * x), -50.0, 50.0, 1e-13, 1e-13, 10_000).unwrap();
    assert!((v - 2.0 * 50f64.atan()).abs() < 1e-12);
    let z: C64 = adaptive(|x: f64| C64::from_polar(1.0, 3.0 * x), 0.0, 1.0, 1e-14, 1e-14, 10_000).unwrap();
    let exact = (C64::from_polar(1.0, 3.0) - 1.0) / C64::new(0.0, 3.0);
    assert!((z - exact).norm() < 1e-13);
}

proptest! {
    #[test]
    fn trace_distance_is_symmetric_and_bounded(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mk = |rng: &mut ChaCha8Rng| {
            let a = random_hermitian(3, rng);
            let mut rho = &a * &a;
            let tr = rho.trace();
            rho = rho.scale(tr.inv());
            rho
        };
        let (r, s) = (mk(&mut rng), mk(&mut rng));
        let d1 = trace_distance(&r, &s).unwrap();
        let d2 = trace_distance(&s, &r).unwrap();
        prop_assert!((d1 - d2).abs() < 1e-12);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&d1));
    }
}
