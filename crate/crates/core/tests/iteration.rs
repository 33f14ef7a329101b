use ricci_core::iteration::{
    run_forward_iteration, run_iteration, ForwardConfig, IterationConfig, Trajectory,
};
use ricci_core::oracles::sphere_step_factor;
use ricci_core::{Backend, Error, Field, ModeId, SpectralCoeffs};
use std::f64::consts::PI;

fn legendre(b: &Backend, psi: &Field, l: usize) -> f64 {
    match b.transform(psi).unwrap() {
        SpectralCoeffs::Legendre { data } => data[l],
        _ => unreachable!(),
    }
}

fn torus(n: usize) -> Backend {
    Backend::torus(n, n, 2.0 * PI, 2.0 * PI).unwrap()
}

fn quiet(cfg: &mut IterationConfig) {
    cfg.diagnostics.functionals = false;
    cfg.diagnostics.green_bounds = false;
}

fn model_config(b: &Backend) -> IterationConfig {
    let mut cfg = IterationConfig::new(b, -1, b.zeros());
    cfg.synthetic_f = Some(b.mode(ModeId::Cos(1, 0)).unwrap().map(|c| 0.2 * c));
    cfg
}

fn increments(t: &Trajectory) -> Vec<f64> {
    t.records.iter().map(|r| r.c0_increment).collect()
}

#[test]
fn fixed_points_do_not_move() {
    let s = Backend::sphere(64).unwrap();
    let t = torus(32);
    let mut model = IterationConfig::new(&t, -1, t.zeros());
    model.synthetic_f = Some(t.zeros());
    for (b, cfg) in [
        (&s, IterationConfig::new(&s, 1, s.zeros())),
        (&t, IterationConfig::new(&t, 0, t.zeros())),
        (&t, model),
    ] {
        let mut cfg = cfg;
        cfg.max_steps = 10;
        cfg.stop_tol_sup = 0.0;
        let traj = run_iteration(b, &cfg).unwrap();
        assert_eq!(traj.records.len(), 10);
        for r in &traj.records {
            assert!(r.c0_increment <= 1e-12);
            assert!(r.curvature_deviation <= 1e-12);
        }
        assert!(traj.final_psi.sup_norm() <= 1e-12);
    }
}

#[test]
fn fixed_point_stops_after_one_step() {
    let s = Backend::sphere(64).unwrap();
    let traj = run_iteration(&s, &IterationConfig::new(&s, 1, s.zeros())).unwrap();
    assert_eq!(traj.records.len(), 1);
    assert!(traj.converged);
}

#[test]
fn zero_steps_returns_initial() {
    let s = Backend::sphere(64).unwrap();
    let psi = s.mode(ModeId::Legendre(2)).unwrap().map(|p| 0.1 * p);
    let mut cfg = IterationConfig::new(&s, 1, psi.clone());
    cfg.max_steps = 0;
    let traj = run_iteration(&s, &cfg).unwrap();
    assert!(traj.records.is_empty());
    assert_eq!(traj.final_psi, psi);
    assert!(!traj.converged);
}

#[test]
fn small_p2_contracts_by_a_third() {
    let s = Backend::sphere(128).unwrap();
    let eps = 1e-3;
    let mut cfg = IterationConfig::new(&s, 1, s.mode(ModeId::Legendre(2)).unwrap().map(|p| eps * p));
    cfg.max_steps = 1;
    quiet(&mut cfg);
    let traj = run_iteration(&s, &cfg).unwrap();
    let ratio = legendre(&s, &traj.final_psi, 2) / eps;
    let expected = sphere_step_factor(2).unwrap();
    assert!((expected - 1.0 / 3.0).abs() < 1e-15);
    assert!((ratio / expected - 1.0).abs() <= 0.01, "ratio {ratio}");
}

#[test]
fn l1_direction_is_neutral() {
    let s = Backend::sphere(128).unwrap();
    let eps = 1e-4;
    let mut cfg = IterationConfig::new(&s, 1, s.mode(ModeId::Legendre(1)).unwrap().map(|p| eps * p));
    cfg.max_steps = 1;
    cfg.gauge_fix = false;
    quiet(&mut cfg);
    let traj = run_iteration(&s, &cfg).unwrap();
    let ratio = legendre(&s, &traj.final_psi, 1) / eps;
    assert!((ratio - 1.0).abs() <= 0.01, "ratio {ratio}");
}

#[test]
fn gauge_fix_removes_l1() {
    let s = Backend::sphere(128).unwrap();
    let psi = s
        .modes(&[(ModeId::Legendre(1), 0.05), (ModeId::Legendre(2), 0.05)])
        .unwrap();
    let mut cfg = IterationConfig::new(&s, 1, psi);
    quiet(&mut cfg);
    let traj = run_iteration(&s, &cfg).unwrap();
    assert!(traj.converged);
    let last = traj.records.last().unwrap();
    assert!(last.curvature_deviation <= 1e-8);
    assert!(traj.records[0].gauge_t != 0.0);
}

#[test]
fn sphere_run_converges_and_k_energy_decreases() {
    let s = Backend::sphere(128).unwrap();
    let mut cfg = IterationConfig::new(&s, 1, s.mode(ModeId::Legendre(2)).unwrap().map(|p| 0.3 * p));
    cfg.diagnostics.green_bounds = false;
    let traj = run_iteration(&s, &cfg).unwrap();
    assert!(traj.converged);
    assert!(traj.records.last().unwrap().ricci_deviation <= 1e-8);
    let energies: Vec<f64> = traj
        .records
        .iter()
        .map(|r| r.functionals.as_ref().unwrap().k_energy.unwrap())
        .collect();
    for w in energies.windows(2) {
        assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
    }
    let ding: Vec<f64> = traj
        .records
        .iter()
        .map(|r| r.functionals.as_ref().unwrap().ding.unwrap())
        .collect();
    for w in ding.windows(2) {
        assert!(w[1] <= w[0] + 1e-10);
    }
}

#[test]
fn flat_torus_run_converges() {
    let t = torus(64);
    let psi = t.random_potential(4, 0.2, 7).unwrap();
    let mut cfg = IterationConfig::new(&t, 0, psi);
    quiet(&mut cfg);
    let traj = run_iteration(&t, &cfg).unwrap();
    assert!(traj.converged);
    let last = traj.records.last().unwrap();
    assert!(last.ricci_deviation <= 1e-8);
    let inc = increments(&traj);
    let tail = &inc[inc.len() - 6..];
    for w in tail.windows(2) {
        assert!(w[1] / w[0] <= 0.95);
    }
}

#[test]
fn model_run_contracts_at_least_by_half() {
    let t = torus(64);
    let mut cfg = model_config(&t);
    quiet(&mut cfg);
    let traj = run_iteration(&t, &cfg).unwrap();
    assert!(traj.converged);
    let inc = increments(&traj);
    for w in inc.windows(2).take_while(|w| w[1] > 1e-9) {
        assert!(w[1] / w[0] <= 0.52, "{} -> {}", w[0], w[1]);
    }
    let last = traj.records.last().unwrap();
    assert!(last.curvature_deviation <= 1e-8);
    // ½ΔΨ = e^{f + Ψ} − 1 for the un-normalized limit Ψ.
    let raw = traj.final_psi.map(|p| p + last.raw_offset);
    let lap = t.laplacian(&raw).unwrap();
    let e = traj.reference.f_omega.zip_map(&raw, |f, p| (f + p).exp());
    let residual = lap.zip_map(&e, |l, e| 0.5 * l - e + 1.0);
    assert!(residual.sup_norm() <= 1e-9);
}

#[test]
fn runs_are_deterministic() {
    let t = torus(32);
    let cfg = IterationConfig::new(&t, 0, t.random_potential(3, 0.3, 11).unwrap());
    let a = run_iteration(&t, &cfg).unwrap();
    let b = run_iteration(&t, &cfg).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.final_psi, b.final_psi);
}

#[test]
fn tiny_increments_mean_constant_curvature() {
    let t = torus(32);
    let mut cfg = IterationConfig::new(&t, 0, t.random_potential(3, 0.3, 5).unwrap());
    quiet(&mut cfg);
    cfg.stop_tol_sup = 1e-13;
    let traj = run_iteration(&t, &cfg).unwrap();
    for r in traj.records.iter().filter(|r| r.c0_increment < 1e-12) {
        assert!(r.curvature_deviation <= 1e-8);
    }
}

#[test]
fn green_slack_is_nonnegative_along_runs() {
    let s = Backend::sphere(64).unwrap();
    let cfg = IterationConfig::new(&s, 1, s.modes(&[(ModeId::Legendre(2), 0.3), (ModeId::Legendre(3), 0.1)]).unwrap());
    let traj = run_iteration(&s, &cfg).unwrap();
    let t = torus(32);
    let model = run_iteration(&t, &model_config(&t)).unwrap();
    for traj in [traj, model] {
        assert!(traj.initial.green_a_ref.unwrap() > 0.0);
        for r in &traj.records {
            assert!(r.green_slack.unwrap() >= -1e-6);
        }
    }
}

#[test]
fn slack_shrinks_with_initial_size() {
    let s = Backend::sphere(64).unwrap();
    let mut last = f64::INFINITY;
    for amp in [0.05, 0.1, 0.2, 0.3, 0.4] {
        let mut cfg = IterationConfig::new(&s, 1, s.mode(ModeId::Legendre(2)).unwrap().map(|p| amp * p));
        cfg.max_steps = 1;
        cfg.diagnostics.functionals = false;
        let slack = run_iteration(&s, &cfg).unwrap().records[0].green_slack.unwrap();
        assert!(slack < last, "amplitude {amp}: {slack} after {last}");
        last = slack;
    }
}

#[test]
fn config_violations_are_collected() {
    let s = Backend::sphere(32).unwrap();
    let mut cfg = IterationConfig::new(&s, -1, s.zeros());
    cfg.stop_tol_sup = -1.0;
    let v = cfg.violations(&s);
    assert_eq!(v.len(), 2);
    assert!(v[0].contains("inadmissible class sign"));
    let err = run_iteration(&s, &cfg).unwrap_err();
    assert!(matches!(err.error, Error::InvalidArgument(_)));
    assert!(err.trajectory.records.is_empty());

    let t = torus(32);
    let cfg = IterationConfig::new(&t, 0, t.random_potential(3, 1.5, 1).unwrap());
    let v = cfg.violations(&t);
    assert_eq!(v.len(), 1);
    assert!(v[0].contains("positivity margin"), "{v:?}");
    let cfg = IterationConfig::new(&t, -1, t.zeros());
    assert!(cfg.violations(&t)[0].contains("inadmissible class sign"));
}

#[test]
fn forward_round_start_stays_round() {
    let s = Backend::sphere(64).unwrap();
    let mut cfg = ForwardConfig::new(s.zeros());
    cfg.max_steps = 5;
    let f = run_forward_iteration(&s, &cfg).unwrap();
    assert_eq!(f.records.len(), 5);
    assert!(f.terminal_min_ricci.is_none());
    assert!(f.periodic_returns.is_empty());
    for r in &f.records {
        assert!(r.curvature_deviation <= 1e-12);
        assert!(r.distance_to_start <= 1e-12);
    }
}

#[test]
fn forward_p2_grows_threefold_until_positivity_fails() {
    let s = Backend::sphere(128).unwrap();
    let eps = 1e-4;
    let mut cfg = ForwardConfig::new(s.mode(ModeId::Legendre(2)).unwrap().map(|p| eps * p));
    cfg.max_steps = 30;
    let f = run_forward_iteration(&s, &cfg).unwrap();
    let min = f.terminal_min_ricci.expect("positivity is eventually lost");
    assert!(min <= 0.0);
    assert!(f.records.len() >= 4);
    let amps: Vec<f64> = f.states.iter().map(|p| legendre(&s, p, 2)).collect();
    for w in amps.windows(2) {
        assert!((w[1] / w[0] / 3.0 - 1.0).abs() <= 0.05, "{}", w[1] / w[0]);
    }
    assert!(f.periodic_returns.is_empty());
    for r in &f.records {
        assert!(r.distance_to_start > 1e-9);
    }
}

#[test]
fn forward_needs_sphere() {
    let t = torus(16);
    assert!(matches!(
        run_forward_iteration(&t, &ForwardConfig::new(t.zeros())),
        Err(Error::Unsupported(_))
    ));
}
