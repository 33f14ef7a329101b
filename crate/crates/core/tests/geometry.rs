use proptest::prelude::*;
use ricci_core::oracles::{dense_apply, dense_laplacian, dense_poisson_solve};
use ricci_core::{Backend, ModeId};
use std::f64::consts::PI;

fn backends() -> Vec<Backend> {
    vec![
        Backend::torus(32, 32, 2.0 * PI, 2.0 * PI).unwrap(),
        Backend::torus(24, 16, 3.0, 5.0).unwrap(),
        Backend::sphere(32).unwrap(),
    ]
}

#[test]
fn spectral_matches_dense_laplacian() {
    for b in backends() {
        let m = dense_laplacian(&b).unwrap();
        for seed in 0..5 {
            let f = b.random_band_limited(6, 1.0, seed).unwrap();
            let spectral = b.laplacian(&f).unwrap();
            let dense = dense_apply(&b, &m, &f).unwrap();
            let d = spectral.sup_distance(&dense).unwrap();
            assert!(d <= 1e-10, "{}: {d:e}", b.tag());
        }
    }
}

#[test]
fn dense_eigenfunctions() {
    let b = Backend::sphere(32).unwrap();
    let m = dense_laplacian(&b).unwrap();
    for l in 1..=6 {
        let p = b.mode(ModeId::Legendre(l)).unwrap();
        let out = dense_apply(&b, &m, &p).unwrap();
        let expect = p.map(|v| -((l * (l + 1)) as f64) * v);
        assert!(out.sup_distance(&expect).unwrap() < 1e-10);
    }
}

#[test]
fn inverse_laplacian_matches_pseudoinverse() {
    for b in [Backend::torus(16, 16, 2.0 * PI, 2.0 * PI).unwrap(), Backend::sphere(16).unwrap()] {
        let g = b.random_band_limited(5, 1.0, 42).unwrap();
        let u = b.inverse_laplacian_zero_mean(&g).unwrap();
        let oracle = dense_poisson_solve(&b, &g).unwrap();
        assert!(u.sup_distance(&oracle).unwrap() <= 1e-9);
        let res = b.laplacian(&u).unwrap().sup_distance(&g).unwrap();
        assert!(res <= 1e-10 * g.sup_norm());
    }
}

#[test]
fn sphere_reference_curvature_integrates_to_euler() {
    let b = Backend::sphere(256).unwrap();
    let k = b.constant(b.reference_curvature());
    let total = b.integrate(&k, None).unwrap();
    assert!((total - 2.0 * PI * b.euler_char() as f64).abs() <= 1e-10 * 4.0 * PI);
}

#[test]
fn transform_round_trip() {
    for b in backends() {
        let f = b.random_band_limited(6, 1.0, 9).unwrap();
        let c = b.transform(&f).unwrap();
        let back = b.transform(&b.inverse_transform(&c).unwrap()).unwrap();
        assert!(c.max_abs_diff(&back).unwrap() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn laplacian_integrates_to_zero(seed in any::<u64>(), band in 1usize..7, which in 0usize..3) {
        let b = &backends()[which];
        let f = b.random_band_limited(band, 1.0, seed).unwrap();
        let total = b.integrate(&b.laplacian(&f).unwrap(), None).unwrap();
        prop_assert!(total.abs() <= 1e-11 * f.sup_norm() * b.volume());
    }

    #[test]
    fn laplacian_is_self_adjoint(s1 in any::<u64>(), s2 in any::<u64>(), which in 0usize..3) {
        let b = &backends()[which];
        let f = b.random_band_limited(6, 1.0, s1).unwrap();
        let g = b.random_band_limited(6, 1.0, s2).unwrap();
        let a = b.integrate(&(&f * &b.laplacian(&g).unwrap()), None).unwrap();
        let c = b.integrate(&(&g * &b.laplacian(&f).unwrap()), None).unwrap();
        prop_assert!((a - c).abs() <= 1e-10 * a.abs().max(c.abs()).max(1.0));
    }

    #[test]
    fn conformal_density_preserves_volume(seed in any::<u64>(), amp in 0.01f64..2.0, which in 0usize..3) {
        let b = &backends()[which];
        let psi = b.random_band_limited(6, amp, seed).unwrap();
        let v = b.conformal_density(&psi).unwrap();
        let total = b.integrate(&v, None).unwrap();
        prop_assert!((total - b.volume()).abs() <= 1e-10 * b.volume());
    }
}
