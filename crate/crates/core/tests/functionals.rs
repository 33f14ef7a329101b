use proptest::prelude::*;
use ricci_core::functionals::{
    aubin_i, aubin_j, default_sources, ding_functional, green_bound_slack, green_function,
    k_energy, k_energy_gradient, k_energy_with,
};
use ricci_core::kahler::MetricState;
use ricci_core::oracles::dense_green;
use ricci_core::{Backend, Error, Field, ModeId};
use std::f64::consts::PI;

fn random_potential(b: &Backend, band: usize, lap_amp: f64, seed: u64) -> Field {
    let psi = b.random_band_limited(band, 1.0, seed).unwrap();
    let s = b.laplacian(&psi).unwrap().sup_norm() * 0.5;
    psi.map(|p| p * lap_amp / s)
}

fn backends() -> Vec<Backend> {
    vec![Backend::sphere(128).unwrap(), Backend::torus(32, 32, 2.0 * PI, 2.0 * PI).unwrap()]
}

#[test]
fn aubin_i_examples() {
    let t = Backend::torus(32, 32, 2.0 * PI, 2.0 * PI).unwrap();
    assert_eq!(aubin_i(&t, &t.zeros()).unwrap(), 0.0);
    assert!(aubin_i(&t, &t.constant(3.0)).unwrap().abs() < 1e-15);
    // ψ = 0.1 cos x, 1 − v = 0.05 cos x:  I = V⁻¹·0.005·π·L2
    let psi = t.mode(ModeId::Cos(1, 0)).unwrap().map(|c| 0.1 * c);
    let vol = t.volume();
    let hand = 0.005 * PI * 2.0 * PI / vol;
    assert!((aubin_i(&t, &psi).unwrap() - hand).abs() <= 1e-12);
    // Direct quadrature oracle of −V⁻¹∫ψ·½Δψ with the analytic Laplacian.
    let w = vol / t.len() as f64;
    let direct: f64 = psi.values().iter().map(|p| p * 0.5 * p * w).sum::<f64>() / vol;
    assert!((aubin_i(&t, &psi).unwrap() - direct).abs() <= 1e-12);
}

#[test]
fn j_is_half_i() {
    for b in backends() {
        for seed in 0..100 {
            let psi = random_potential(&b, 5, 0.8, seed);
            let i = aubin_i(&b, &psi).unwrap();
            let j = aubin_j(&b, &psi).unwrap();
            assert!(i > 0.0 && j > 0.0);
            assert!((j / i - 0.5).abs() <= 1e-9, "{} seed {seed}", b.tag());
        }
        assert_eq!(aubin_j(&b, &b.zeros()).unwrap(), 0.0);
    }
}

#[test]
fn gauge_invariance() {
    let b = Backend::sphere(128).unwrap();
    let f = b.zeros();
    for seed in 0..10 {
        let psi = random_potential(&b, 5, 0.5, seed);
        let shifted = psi.map(|p| p + 1.7);
        let pairs = [
            (aubin_i(&b, &psi).unwrap(), aubin_i(&b, &shifted).unwrap()),
            (aubin_j(&b, &psi).unwrap(), aubin_j(&b, &shifted).unwrap()),
            (ding_functional(&b, &psi, &f).unwrap(), ding_functional(&b, &shifted, &f).unwrap()),
            (k_energy(&b, &psi).unwrap(), k_energy(&b, &shifted).unwrap()),
        ];
        for (a, c) in pairs {
            assert!((a - c).abs() <= 1e-10, "{a} vs {c}");
        }
    }
    assert!(ding_functional(&b, &b.constant(2.0), &f).unwrap().abs() < 1e-14);
    let t = Backend::torus(8, 8, 1.0, 1.0).unwrap();
    assert!(matches!(ding_functional(&t, &t.zeros(), &t.zeros()), Err(Error::Unsupported(_))));
}

#[test]
fn ding_is_stationary_at_round_metric() {
    let b = Backend::sphere(128).unwrap();
    let f = b.zeros();
    let h = 1e-5;
    for seed in 0..5 {
        let dir = b.random_band_limited(6, 1.0, seed).unwrap();
        let plus = ding_functional(&b, &dir.map(|d| h * d), &f).unwrap();
        let minus = ding_functional(&b, &dir.map(|d| -h * d), &f).unwrap();
        assert!(((plus - minus) / (2.0 * h)).abs() <= 1e-8);
    }
}

#[test]
fn k_energy_quadrature_refines() {
    let b = Backend::sphere(128).unwrap();
    let reference = b.constant(1.0);
    assert_eq!(k_energy(&b, &b.zeros()).unwrap(), 0.0);
    for seed in 0..5 {
        let psi = random_potential(&b, 4, 0.2, seed);
        let a = k_energy_with(&b, &psi, &reference, 16).unwrap();
        let c = k_energy_with(&b, &psi, &reference, 32).unwrap();
        assert!((a - c).abs() <= 1e-9, "{a} {c}");
    }
}

#[test]
fn k_energy_rejects_non_kahler_path() {
    let b = Backend::sphere(64).unwrap();
    let psi = b.mode(ModeId::Legendre(2)).unwrap().map(|p| 0.8 * p);
    assert!(matches!(k_energy(&b, &psi), Err(Error::PathNotKahler { .. })));
}

#[test]
fn k_energy_gradient_matches_finite_differences() {
    for b in backends() {
        let reference = b.constant(b.reference_curvature());
        for seed in 0..5 {
            let psi = random_potential(&b, 4, 0.4, seed);
            let dir = b.random_band_limited(4, 1.0, seed + 50).unwrap();
            let grad = k_energy_gradient(&b, &psi, &reference).unwrap();
            let analytic = b.integrate(&(&grad * &dir), None).unwrap();
            let h = 1e-4;
            let nu = |s: f64| {
                let p = psi.zip_map(&dir, |p, d| p + s * d);
                k_energy_with(&b, &p, &reference, 32).unwrap()
            };
            // Fourth-order central difference.
            let fd = (8.0 * (nu(h) - nu(-h)) - (nu(2.0 * h) - nu(-2.0 * h))) / (12.0 * h);
            assert!(
                (fd - analytic).abs() <= 1e-6 * analytic.abs().max(1e-3),
                "{} seed {seed}: fd {fd} analytic {analytic}",
                b.tag()
            );
        }
    }
}

#[test]
fn green_matches_lattice_oracle_on_flat_torus() {
    let b = Backend::torus(32, 32, 2.0 * PI, 2.0 * PI).unwrap();
    let Backend::Torus(t) = &b else { unreachable!() };
    let m = MetricState::reference(&b);
    let sources = default_sources(&b, 12);
    let g = green_function(&b, &m, &sources).unwrap();
    for (col, &y) in g.columns.iter().zip(&sources) {
        let (yx, yy) = t.point(y);
        let oracle = t.sample(|x1, x2| {
            let mut s = 0.0;
            for k1 in -15i64..=16 {
                for k2 in -15i64..=16 {
                    if k1 == 0 && k2 == 0 {
                        continue;
                    }
                    let phase = k1 as f64 * (x1 - yx) + k2 as f64 * (x2 - yy);
                    s += 2.0 * phase.cos() / (k1 * k1 + k2 * k2) as f64;
                }
            }
            s
        });
        let oracle = b.from_values(oracle).unwrap();
        assert!(col.sup_distance(&oracle).unwrap() <= 1e-9);
    }
    assert!(g.a > 0.0);
}

#[test]
fn green_matches_dense_oracle_on_curved_metrics() {
    for b in [Backend::sphere(32).unwrap(), Backend::torus(16, 16, 2.0 * PI, 2.0 * PI).unwrap()] {
        let m = MetricState::new(&b, random_potential(&b, 4, 0.5, 3)).unwrap();
        let sources = default_sources(&b, 8);
        let g = green_function(&b, &m, &sources).unwrap();
        let dense = dense_green(&b, m.density(), &sources).unwrap();
        for (a, c) in g.columns.iter().zip(&dense) {
            let d = a.sup_distance(c).unwrap();
            assert!(d <= 1e-8 * c.sup_norm().max(1.0), "{}: {d:e}", b.tag());
        }
    }
}

#[test]
fn green_structure() {
    for b in backends() {
        let m = MetricState::new(&b, random_potential(&b, 4, 0.5, 9)).unwrap();
        let sources = default_sources(&b, 24);
        let g = green_function(&b, &m, &sources).unwrap();
        assert!(g.a > 0.0);
        for col in &g.columns {
            assert!(b.integrate(col, Some(m.density())).unwrap().abs() <= 1e-8);
        }
        for a in 0..10 {
            let c = (a * 7 + 3) % sources.len();
            let d = (g.between(a, c) - g.between(c, a)).abs();
            assert!(d <= 1e-7, "{}: {d:e}", b.tag());
        }
        // V⁻¹ ∫G(·,y)·(−Δ_ψ φ)·v dA = φ(y) − mean_ψ φ,  with Δ_ψ = ½ v⁻¹ Δ.
        let phi = b.random_band_limited(4, 1.0, 77).unwrap();
        let minus_half_lap = b.laplacian(&phi).unwrap().map(|l| -0.5 * l);
        let mean_psi = b.integrate(&phi, Some(m.density())).unwrap() / b.volume();
        for (col, &y) in g.columns.iter().zip(&sources) {
            let lhs = b.integrate(&(col * &minus_half_lap), None).unwrap() / b.volume();
            assert!((lhs - (phi.values()[y] - mean_psi)).abs() <= 1e-6);
        }
    }
}

#[test]
fn bound_slack_at_reference() {
    let b = Backend::sphere(128).unwrap();
    let m = MetricState::reference(&b);
    let a0 = green_function(&b, &m, &default_sources(&b, 64)).unwrap().a;
    let slack = green_bound_slack(a0, a0, 0.0, 0.0);
    assert_eq!(slack, 2.0 * a0);
    assert!(slack >= 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn functionals_are_nonnegative(seed in any::<u64>(), amp in 0.05f64..0.9) {
        let b = Backend::torus(16, 16, 2.0 * PI, 2.0 * PI).unwrap();
        let psi = random_potential(&b, 3, amp, seed);
        let i = aubin_i(&b, &psi).unwrap();
        let j = aubin_j(&b, &psi).unwrap();
        prop_assert!(i >= 0.0 && j >= 0.0);
        prop_assert!((j - 0.5 * i).abs() <= 1e-9 * i);
    }
}
