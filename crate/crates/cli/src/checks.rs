//! The acceptance suite behind `ricci-iter check`.
//!
//! Criteria share runs through a [`Session`], so the convergence runs are
//! computed once and reused by the monotonicity and Green-bound audits.

use crate::commands::{forward_artifacts, iteration_artifacts, Artifact};
use crate::config::{parse_config, RunConfig};
use ricci_core::functionals::{aubin_i, aubin_j, k_energy_gradient, k_energy_with};
use ricci_core::iteration::{run_forward_iteration, run_iteration, ForwardTrajectory, Trajectory};
use ricci_core::kahler::{forward_ricci, inverse_ricci, ricci_form, ForwardOutcome, MetricState};
use ricci_core::oracles::{dense_apply, dense_laplacian, sphere_step_factor};
use ricci_core::{Backend, Field, SpectralCoeffs};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

pub const FIXED_SPHERE: &str = include_str!("../configs/fixed_sphere.json");
pub const FIXED_TORUS: &str = include_str!("../configs/fixed_torus.json");
pub const SPHERE_CONVERGENCE: &str = include_str!("../configs/sphere_convergence.json");
pub const TORUS_MODEL: &str = include_str!("../configs/torus_model.json");
pub const FORWARD_P2: &str = include_str!("../configs/forward_p2.json");

pub const CRITERIA: [(u8, &str); 8] = [
    (1, "fixed-point rigidity"),
    (2, "mu=1 convergence"),
    (3, "mu=-1 contraction"),
    (4, "energy monotonicity"),
    (5, "Green bound"),
    (6, "inverse/forward Ricci duality"),
    (7, "structural identities"),
    (8, "determinism"),
];

#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub limit: Option<Duration>,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        let limit = self
            .limit
            .map(|l| format!(", limit {} s", l.as_secs()))
            .unwrap_or_default();
        format!(
            "criterion {} {:<4} {} ({:.2} s{limit}): {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

fn bundled(text: &str) -> RunConfig {
    parse_config(text, Path::new(".")).expect("bundled configs are valid")
}

struct IterationRun {
    traj: Result<Trajectory, String>,
    artifacts: Vec<Artifact>,
    elapsed: Duration,
}

fn run_config(cfg: &RunConfig) -> IterationRun {
    let start = Instant::now();
    let (traj, artifacts) = match run_iteration(&cfg.backend, &cfg.iteration) {
        Ok(t) => {
            let a = iteration_artifacts(cfg, &t, None, None);
            (Ok(t), a)
        }
        Err(e) => {
            let a = iteration_artifacts(cfg, &e.trajectory, Some(&e.error), None);
            (Err(e.to_string()), a)
        }
    };
    IterationRun {
        traj,
        artifacts,
        elapsed: start.elapsed(),
    }
}

/// Runs shared between criteria.
#[derive(Default)]
pub struct Session {
    runs: BTreeMap<&'static str, IterationRun>,
    forward: Option<(Result<ForwardTrajectory, String>, Vec<Artifact>)>,
    digests: BTreeMap<u8, String>,
}

fn iteration_configs() -> [(&'static str, &'static str); 4] {
    [
        ("fixed_sphere", FIXED_SPHERE),
        ("fixed_torus", FIXED_TORUS),
        ("sphere_convergence", SPHERE_CONVERGENCE),
        ("torus_model", TORUS_MODEL),
    ]
}

impl Session {
    fn run(&mut self, name: &'static str) -> &IterationRun {
        self.runs.entry(name).or_insert_with(|| {
            let text = iteration_configs()
                .iter()
                .find(|c| c.0 == name)
                .map(|c| c.1)
                .expect("known config");
            let mut cfg = bundled(text);
            cfg.iteration.keep_states = name == "sphere_convergence";
            run_config(&cfg)
        })
    }
}

fn p2(b: &Backend, f: &Field) -> f64 {
    match b.transform(f) {
        Ok(SpectralCoeffs::Legendre { data }) => data[2],
        _ => f64::NAN,
    }
}

type Verdict = (bool, String);

fn criterion1(s: &mut Session) -> Verdict {
    let mut ok = true;
    let mut detail = Vec::new();
    for name in ["fixed_sphere", "fixed_torus"] {
        match &s.run(name).traj {
            Ok(t) => {
                let inc = t.records.iter().map(|r| r.c0_increment).fold(0.0, f64::max);
                let curv = t.records.iter().map(|r| r.curvature_deviation).fold(0.0, f64::max);
                ok &= t.records.len() == 50 && inc <= 1e-11 && curv <= 1e-10;
                detail.push(format!(
                    "{name}: {} steps, max increment {inc:.1e}, max curvature deviation {curv:.1e}",
                    t.records.len()
                ));
            }
            Err(e) => {
                ok = false;
                detail.push(format!("{name}: {e}"));
            }
        }
    }
    (ok, detail.join("; "))
}

fn criterion2(s: &mut Session) -> Verdict {
    let b = Backend::sphere(256).expect("valid resolution");
    let t = match &s.run("sphere_convergence").traj {
        Ok(t) => t,
        Err(e) => return (false, e.clone()),
    };
    let last = t.records.last();
    let curv = last.map_or(f64::INFINITY, |r| r.curvature_deviation);
    let ricci = last.map_or(f64::INFINITY, |r| r.ricci_deviation);
    // P2 content of successive increments, above the roundoff floor.
    let coeffs: Vec<f64> = t
        .states
        .windows(2)
        .map(|w| p2(&b, &(&w[1] - &w[0])))
        .collect();
    let ratio = coeffs
        .windows(2)
        .filter(|w| w[1].abs() > 1e-8)
        .map(|w| w[1] / w[0])
        .next_back()
        .unwrap_or(f64::NAN);
    let expected = sphere_step_factor(2).unwrap_or(f64::NAN);
    let ok = t.converged
        && t.records.len() <= 200
        && curv <= 1e-8
        && ricci <= 1e-8
        && (ratio - expected).abs() <= 0.02;
    (
        ok,
        format!(
            "converged {} in {} steps, |K-1| {curv:.1e}, |r-1| {ricci:.1e}, P2 ratio {ratio:.5} (linearized {expected:.5})",
            t.converged,
            t.records.len()
        ),
    )
}

/// Least-squares per-step ratio of `log inc_k` against `k`.
pub fn fitted_ratio(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return f64::NAN;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxy / sxx).exp()
}

fn criterion3(s: &mut Session) -> Verdict {
    let t = match &s.run("torus_model").traj {
        Ok(t) => t,
        Err(e) => return (false, e.clone()),
    };
    let points: Vec<(f64, f64)> = t
        .records
        .iter()
        .take_while(|r| r.c0_increment > 1e-9)
        .map(|r| (r.k as f64, r.c0_increment))
        .collect();
    let ratio = fitted_ratio(&points);
    let c = points
        .iter()
        .map(|(k, inc)| inc * 2f64.powf(*k))
        .fold(0.0, f64::max);
    let b = bundled(TORUS_MODEL).backend;
    let last = t.records.last();
    let residual = last.map_or(f64::INFINITY, |r| {
        let raw = t.final_psi.map(|p| p + r.raw_offset);
        let lap = b.laplacian(&raw).expect("same grid");
        let e = t.reference.f_omega.zip_map(&raw, |f, p| (f + p).exp());
        lap.zip_map(&e, |l, e| 0.5 * l - e + 1.0).sup_norm()
    });
    let ok = t.converged && ratio <= 0.52 && residual <= 1e-9;
    (
        ok,
        format!(
            "{} steps, fitted ratio {ratio:.4} over k = 1..{}, C = {c:.3e}, limit residual {residual:.1e}",
            t.records.len(),
            points.len()
        ),
    )
}

fn criterion4(s: &mut Session) -> Verdict {
    let t = match &s.run("sphere_convergence").traj {
        Ok(t) => t,
        Err(e) => return (false, e.clone()),
    };
    let mut ding: Vec<f64> = t.initial.functionals.iter().filter_map(|f| f.ding).collect();
    let mut kenergy: Vec<f64> = t.initial.functionals.iter().filter_map(|f| f.k_energy).collect();
    for r in &t.records {
        let f = r.functionals.as_ref();
        ding.extend(f.and_then(|f| f.ding));
        kenergy.extend(f.and_then(|f| f.k_energy));
    }
    let worst = |v: &[f64]| v.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let (wd, wk) = (worst(&ding), worst(&kenergy));
    let complete = ding.len() == t.records.len() + 1 && kenergy.len() >= t.records.len();
    let ok = complete && wd <= 1e-10 && wk <= 1e-10;
    (
        ok,
        format!(
            "Ding {:.6e} -> {:.6e} (largest rise {wd:.1e}), K-energy largest rise {wk:.1e} over {} values",
            ding.first().copied().unwrap_or(f64::NAN),
            ding.last().copied().unwrap_or(f64::NAN),
            kenergy.len()
        ),
    )
}

fn criterion5(s: &mut Session) -> (bool, String, Duration) {
    let mut ok = true;
    let mut detail = Vec::new();
    let mut elapsed = Duration::ZERO;
    for name in ["sphere_convergence", "torus_model"] {
        let run = s.run(name);
        elapsed += run.elapsed;
        match &run.traj {
            Ok(t) => {
                let slacks: Vec<f64> = t
                    .initial
                    .green_slack
                    .into_iter()
                    .chain(t.records.iter().filter_map(|r| r.green_slack))
                    .collect();
                let min = slacks.iter().cloned().fold(f64::INFINITY, f64::min);
                ok &= slacks.len() >= t.records.len() && min >= -1e-6;
                detail.push(format!("{name}: min slack {min:.4e} over {} steps", slacks.len()));
            }
            Err(e) => {
                ok = false;
                detail.push(format!("{name}: {e}"));
            }
        }
    }
    (ok, detail.join("; "), elapsed)
}

fn duality() -> (bool, String, String) {
    let b = Backend::sphere(128).expect("valid resolution");
    let mut left: f64 = 0.0;
    let mut right: f64 = 0.0;
    let mut failures = Vec::new();
    for seed in 0..20u64 {
        let outcome = (|| -> ricci_core::Result<(f64, f64)> {
            let m = MetricState::new(&b, b.random_potential(6, 0.02, seed)?)?;
            let rd = ricci_form(&b, &m)?;
            if !rd.positive {
                return Err(ricci_core::Error::InvalidArgument("sample lacks positive Ricci".into()));
            }
            let back = inverse_ricci(&b, &rd.ricci_density)?;
            let l = back.psi().sup_distance(m.psi())?;

            let g = b.random_band_limited(6, 0.3, seed + 1000)?;
            let h = g.map(|x| 1.0 + x);
            let pre = inverse_ricci(&b, &h)?;
            let r = match forward_ricci(&b, &pre)? {
                ForwardOutcome::Positive(img) => img.density().sup_distance(&h)?,
                ForwardOutcome::NotPositive { min_ricci } => {
                    return Err(ricci_core::Error::InvalidArgument(format!(
                        "image lost positivity ({min_ricci:.3e})"
                    )))
                }
            };
            Ok((l, r))
        })();
        match outcome {
            Ok((l, r)) => {
                left = left.max(l);
                right = right.max(r);
            }
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }

    let cfg = bundled(FORWARD_P2);
    let (growth_ok, growth) = match run_forward_iteration(&cfg.backend, &cfg.forward) {
        Ok(f) => {
            let amps: Vec<f64> = f.states.iter().map(|p| p2(&cfg.backend, p)).collect();
            let ratios: Vec<f64> = amps.windows(2).map(|w| w[1] / w[0]).collect();
            let worst = ratios.iter().map(|r| (r / 3.0 - 1.0).abs()).fold(0.0, f64::max);
            let ok = f.terminal_min_ricci.is_some() && !ratios.is_empty() && worst <= 0.05 && f.periodic_returns.is_empty();
            (
                ok,
                format!(
                    "forward growth {} over {} steps, worst deviation from 3 {:.2}%, positivity lost {}",
                    ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>().join(" "),
                    f.records.len(),
                    100.0 * worst,
                    f.terminal_min_ricci.is_some()
                ),
            )
        }
        Err(e) => (false, format!("forward run failed: {e}")),
    };
    let ok = failures.is_empty() && left <= 1e-7 && right <= 1e-7 && growth_ok;
    let mut detail = format!("Ric^-1 Ric {left:.1e}, Ric Ric^-1 {right:.1e}; {growth}");
    if !failures.is_empty() {
        write!(detail, "; {}", failures.join("; ")).unwrap();
    }
    let digest = format!("{left:.16e} {right:.16e} {growth}");
    (ok, detail, digest)
}

fn structural() -> (bool, String, String) {
    let sphere = Backend::sphere(128).expect("valid resolution");
    let torus = Backend::torus(32, 32, 2.0 * PI, 2.0 * PI).expect("valid resolution");
    let mut failures = Vec::new();

    let mut j_err: f64 = 0.0;
    for b in [&sphere, &torus] {
        for seed in 0..50u64 {
            match b.random_potential(5, 0.8, seed).and_then(|p| Ok((aubin_i(b, &p)?, aubin_j(b, &p)?))) {
                Ok((i, j)) => j_err = j_err.max((j / i - 0.5).abs() / 0.5),
                Err(e) => failures.push(format!("J/I seed {seed}: {e}")),
            }
        }
    }

    let mut gb_err: f64 = 0.0;
    for b in [&sphere, &torus] {
        let target = 2.0 * PI * b.euler_char() as f64;
        for seed in 0..20u64 {
            let r = b
                .random_potential(5, 0.7, seed)
                .and_then(|p| MetricState::new(b, p))
                .and_then(|m| ricci_form(b, &m))
                .and_then(|rd| b.integrate(&rd.ricci_density, None));
            match r {
                Ok(total) => gb_err = gb_err.max((total - target).abs() / target.abs().max(1.0)),
                Err(e) => failures.push(format!("Gauss-Bonnet seed {seed}: {e}")),
            }
        }
    }

    let mut op_err: f64 = 0.0;
    let small_sphere = Backend::sphere(32).expect("valid resolution");
    for b in [&small_sphere, &torus] {
        let r = dense_laplacian(b).and_then(|m| {
            let mut worst: f64 = 0.0;
            for seed in 0..5u64 {
                let f = b.random_band_limited(6, 1.0, seed)?;
                worst = worst.max(dense_apply(b, &m, &f)?.sup_distance(&b.laplacian(&f)?)?);
            }
            Ok(worst)
        });
        match r {
            Ok(w) => op_err = op_err.max(w),
            Err(e) => failures.push(format!("dense operator: {e}")),
        }
    }

    let mut fd_err: f64 = 0.0;
    for b in [&sphere, &torus] {
        let reference = b.constant(b.reference_curvature());
        for seed in 0..3u64 {
            let r = (|| -> ricci_core::Result<f64> {
                let psi = b.random_potential(4, 0.4, seed)?;
                let dir = b.random_band_limited(4, 1.0, seed + 50)?;
                let grad = k_energy_gradient(b, &psi, &reference)?;
                let analytic = b.integrate(&(&grad * &dir), None)?;
                let h = 1e-4;
                let nu = |s: f64| k_energy_with(b, &psi.zip_map(&dir, |p, d| p + s * d), &reference, 32);
                let fd = (8.0 * (nu(h)? - nu(-h)?) - (nu(2.0 * h)? - nu(-2.0 * h)?)) / (12.0 * h);
                Ok((fd - analytic).abs() / analytic.abs().max(1e-3))
            })();
            match r {
                Ok(e) => fd_err = fd_err.max(e),
                Err(e) => failures.push(format!("K-energy gradient seed {seed}: {e}")),
            }
        }
    }

    let ok = failures.is_empty() && j_err <= 1e-9 && gb_err <= 1e-8 && op_err <= 1e-10 && fd_err <= 1e-6;
    let mut detail = format!(
        "J/I rel {j_err:.1e}, Gauss-Bonnet rel {gb_err:.1e}, spectral vs dense {op_err:.1e}, K-energy gradient rel {fd_err:.1e}"
    );
    if !failures.is_empty() {
        write!(detail, "; {}", failures.join("; ")).unwrap();
    }
    let digest = format!("{j_err:.16e} {gb_err:.16e} {op_err:.16e} {fd_err:.16e}");
    (ok, detail, digest)
}

fn forward_run(s: &mut Session) -> &(Result<ForwardTrajectory, String>, Vec<Artifact>) {
    s.forward.get_or_insert_with(|| {
        let cfg = bundled(FORWARD_P2);
        match run_forward_iteration(&cfg.backend, &cfg.forward) {
            Ok(f) => {
                let a = forward_artifacts(&cfg, &f);
                (Ok(f), a)
            }
            Err(e) => (Err(e.to_string()), Vec::new()),
        }
    })
}

fn criterion8(s: &mut Session) -> Verdict {
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for (name, text) in iteration_configs() {
        let first = s.run(name).artifacts.clone();
        let mut cfg = bundled(text);
        cfg.iteration.keep_states = name == "sphere_convergence";
        let second = run_config(&cfg).artifacts;
        compared += first.len();
        if first != second {
            mismatches.push(name.to_string());
        }
    }
    let first = forward_run(s).1.clone();
    let cfg = bundled(FORWARD_P2);
    let second = run_forward_iteration(&cfg.backend, &cfg.forward)
        .map(|f| forward_artifacts(&cfg, &f))
        .unwrap_or_default();
    compared += first.len();
    if first != second || first.is_empty() {
        mismatches.push("forward_p2".into());
    }
    for (id, rerun) in [(6u8, duality as fn() -> (bool, String, String)), (7, structural)] {
        let digest = match s.digests.get(&id) {
            Some(d) => d.clone(),
            None => {
                let d = rerun().2;
                s.digests.insert(id, d.clone());
                d
            }
        };
        compared += 1;
        if rerun().2 != digest {
            mismatches.push(format!("criterion {id} values"));
        }
    }
    if mismatches.is_empty() {
        (true, format!("{compared} outputs byte-identical across two runs"))
    } else {
        (false, format!("outputs differ for {}", mismatches.join(", ")))
    }
}

/// Runs the selected criteria in order; an empty selection runs all of them.
pub fn run_acceptance(selection: &[u8]) -> Vec<CriterionReport> {
    let mut session = Session::default();
    run_acceptance_with(&mut session, selection)
}

pub fn run_acceptance_with(session: &mut Session, selection: &[u8]) -> Vec<CriterionReport> {
    let mut out = Vec::new();
    for (id, title) in CRITERIA {
        if !selection.is_empty() && !selection.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (passed, detail, limit, shared) = match id {
            1 => {
                let (p, d) = criterion1(session);
                (p, d, Some(5), None)
            }
            2 => {
                let (p, d) = criterion2(session);
                (p, d, Some(30), None)
            }
            3 => {
                let (p, d) = criterion3(session);
                (p, d, Some(10), None)
            }
            4 => {
                let (p, d) = criterion4(session);
                (p, d, None, None)
            }
            5 => {
                let before = start.elapsed();
                let (p, d, runs) = criterion5(session);
                (p, d, Some(60), Some(runs.saturating_sub(before)))
            }
            6 => {
                let (p, d, digest) = duality();
                session.digests.insert(6, digest);
                (p, d, Some(10), None)
            }
            7 => {
                let (p, d, digest) = structural();
                session.digests.insert(7, digest);
                (p, d, Some(30), None)
            }
            _ => {
                let (p, d) = criterion8(session);
                (p, d, None, None)
            }
        };
        let mut elapsed = start.elapsed();
        if let Some(runs) = shared {
            // Runs reused from earlier criteria still count against this budget.
            elapsed = elapsed.max(runs);
        }
        let limit = limit.map(Duration::from_secs);
        let in_time = limit.is_none_or(|l| elapsed <= l);
        out.push(CriterionReport {
            id,
            title,
            passed: passed && in_time,
            detail: if in_time {
                detail
            } else {
                format!("{detail}; over the runtime limit")
            },
            elapsed,
            limit,
        });
    }
    out
}

/// One audited invariant of a user-supplied run.
#[derive(Clone, Debug)]
pub struct AuditLine {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Invariants of the iteration checked on the run described by `cfg`.
pub fn audit_config(cfg: &RunConfig) -> Vec<AuditLine> {
    let first = run_config(cfg);
    let second = run_config(cfg);
    let mut out = vec![AuditLine {
        name: "determinism",
        passed: first.artifacts == second.artifacts,
        detail: format!("{} artifacts compared", first.artifacts.len()),
    }];
    let t = match first.traj {
        Ok(t) => t,
        Err(e) => {
            out.push(AuditLine {
                name: "run",
                passed: false,
                detail: e,
            });
            return out;
        }
    };
    let slacks: Vec<f64> = t.records.iter().filter_map(|r| r.green_slack).collect();
    if !slacks.is_empty() {
        let min = slacks.iter().cloned().fold(f64::INFINITY, f64::min);
        out.push(AuditLine {
            name: "green bound",
            passed: min >= -1e-6,
            detail: format!("min slack {min:.4e}"),
        });
    }
    let rigid = t
        .records
        .iter()
        .filter(|r| r.c0_increment < 1e-12)
        .map(|r| r.curvature_deviation)
        .fold(0.0, f64::max);
    out.push(AuditLine {
        name: "fixed-point rigidity",
        passed: rigid <= 1e-8,
        detail: format!("max curvature deviation at stationary steps {rigid:.1e}"),
    });
    let rise = |get: fn(&ricci_core::functionals::FunctionalValues) -> Option<f64>| {
        let v: Vec<f64> = t
            .records
            .iter()
            .filter_map(|r| r.functionals.as_ref().and_then(get))
            .collect();
        (v.len(), v.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max))
    };
    let (n, ding) = rise(|f| f.ding);
    if n > 1 {
        out.push(AuditLine {
            name: "Ding monotonicity",
            passed: ding <= 1e-10,
            detail: format!("largest rise {ding:.1e}"),
        });
    }
    let (n, ke) = rise(|f| f.k_energy);
    if n > 1 && t.converged {
        out.push(AuditLine {
            name: "K-energy monotonicity",
            passed: ke <= 1e-10,
            detail: format!("largest rise {ke:.1e}"),
        });
    }
    if t.converged && t.records.len() > 6 {
        let inc: Vec<f64> = t.records.iter().map(|r| r.c0_increment).collect();
        let tail = &inc[inc.len() - 6..inc.len() - 1];
        let worst = tail.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
        let bound = if t.model { 0.52 } else { 0.95 };
        out.push(AuditLine {
            name: "geometric decay",
            passed: worst <= bound,
            detail: format!("largest late ratio {worst:.4} (bound {bound})"),
        });
    }
    out
}
