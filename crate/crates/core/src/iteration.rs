//! The time-one Ricci iteration and Nadel's forward Ricci sequence.
//!
//! Each step solves `ω_{ψ_k} = ω·exp(f_ω + (1 − μ)ψ_k − ψ_{k−1})`. For `μ = 1`
//! this is a Poisson problem; otherwise a semilinear one with `a = 1 − μ`.
//! Potentials are stored with zero mean; the constants split off at each
//! step are kept in the records.

use crate::elliptic::{solve_poisson_step, solve_semilinear, SemilinearProblem, SolveReport, SolverOptions};
use crate::error::{Error, Result};
use crate::functionals::{
    aubin_i, aubin_j, default_sources, ding_functional, green_bound_slack, green_function,
    k_energy_with, FunctionalValues, K_ENERGY_NODES,
};
use crate::geometry::{Backend, Field, SpectralCoeffs};
use crate::kahler::{
    forward_ricci, mobius_gauge_fix, normalize_for_step, ricci_form_relative, ForwardOutcome, MetricState,
};
use std::fmt;

pub const DEFAULT_STOP_TOL: f64 = 1e-11;
pub const DEFAULT_MAX_STEPS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub functionals: bool,
    pub green_bounds: bool,
    /// Number of Green source nodes; backend default when `None`.
    pub green_sources: Option<usize>,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Diagnostics {
            functionals: true,
            green_bounds: true,
            green_sources: None,
        }
    }
}

impl Diagnostics {
    pub fn source_count(&self, backend: &Backend) -> usize {
        self.green_sources
            .unwrap_or(if backend.is_sphere() { 64 } else { 48 })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationConfig {
    pub mu: i32,
    pub initial_psi: Field,
    /// Ricci potential of the reference form in the torus model mode.
    pub synthetic_f: Option<Field>,
    pub max_steps: usize,
    /// Zero runs all `max_steps`.
    pub stop_tol_sup: f64,
    pub gauge_fix: bool,
    pub diagnostics: Diagnostics,
    pub solver: SolverOptions,
    /// Keep every potential in the trajectory.
    pub keep_states: bool,
}

impl IterationConfig {
    pub fn new(backend: &Backend, mu: i32, initial_psi: Field) -> Self {
        IterationConfig {
            mu,
            initial_psi,
            synthetic_f: None,
            max_steps: DEFAULT_MAX_STEPS,
            stop_tol_sup: DEFAULT_STOP_TOL,
            gauge_fix: backend.is_sphere(),
            diagnostics: Diagnostics::default(),
            solver: SolverOptions::default(),
            keep_states: false,
        }
    }

    pub fn is_model(&self) -> bool {
        self.synthetic_f.is_some()
    }

    /// Collects every violation instead of stopping at the first.
    pub fn violations(&self, backend: &Backend) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = backend.check(&self.initial_psi) {
            out.push(format!("initial potential: {e}"));
        }
        match (backend.is_sphere(), self.mu, self.is_model()) {
            (true, 1, false) | (false, 0, false) | (false, -1, true) => {}
            (true, _, true) => out.push("synthetic f is only available on the torus backend".into()),
            (false, -1, false) => {
                out.push("inadmissible class sign: mu = -1 needs the synthetic-f model mode".into())
            }
            (false, m, true) => out.push(format!("synthetic f requires mu = -1, got {m}")),
            (_, m, _) => out.push(format!(
                "inadmissible class sign: mu = {m} on the {} backend",
                if backend.is_sphere() { "sphere" } else { "torus" }
            )),
        }
        if let Some(f) = &self.synthetic_f {
            if let Err(e) = backend.check(f) {
                out.push(format!("synthetic f: {e}"));
            }
        }
        if !(self.stop_tol_sup >= 0.0 && self.stop_tol_sup.is_finite()) {
            out.push(format!("stop tolerance must be nonnegative, got {}", self.stop_tol_sup));
        }
        if !(self.solver.tol_sup > 0.0 && self.solver.tol_sup.is_finite()) {
            out.push(format!("solver tolerance must be positive, got {}", self.solver.tol_sup));
        }
        if self.gauge_fix && !backend.is_sphere() {
            out.push("the Möbius gauge fix exists only on the sphere".into());
        }
        if self.mu <= 0 && backend.check(&self.initial_psi).is_ok() {
            if let Err(Error::NotKahler { margin }) = MetricState::new(backend, self.initial_psi.clone()) {
                out.push(format!(
                    "initial potential is not Kähler: positivity margin {margin:.6e}"
                ));
            }
        }
        out
    }
}

/// Reference data shared by every step of a run.
#[derive(Clone, Debug)]
pub struct Reference {
    pub mu: i32,
    /// Ricci potential of `ω`, normalized by `∫e^{f_ω} = V`.
    pub f_omega: Field,
    /// Ricci density of `ω`: `μ + ½Δf_ω`.
    pub ricci: Field,
    pub model: bool,
}

impl Reference {
    pub fn new(backend: &Backend, mu: i32, synthetic_f: Option<&Field>) -> Result<Self> {
        match synthetic_f {
            None => Ok(Reference {
                mu,
                f_omega: backend.zeros(),
                ricci: backend.constant(backend.reference_curvature()),
                model: false,
            }),
            Some(f) => {
                backend.check(f)?;
                let z = backend.integrate(&f.map(f64::exp), None)?;
                let f = f.map(|x| x - (z / backend.volume()).ln());
                let lap = backend.laplacian(&f)?;
                Ok(Reference {
                    mu,
                    ricci: lap.map(|l| mu as f64 + 0.5 * l),
                    f_omega: f,
                    model: true,
                })
            }
        }
    }
}

/// Outcome of one Monge–Ampère solve.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSolve {
    /// Zero-mean `ψ_k`.
    pub psi: Field,
    /// For `μ = 1` the constant of `normalize_for_step`; otherwise the mean of the raw solution.
    pub constant: f64,
    pub report: SolveReport,
}

/// One iteration step from the zero-mean `ψ_{k−1}`.
pub fn ricci_step(
    backend: &Backend,
    prev: &Field,
    reference: &Reference,
    guess: Option<&Field>,
    opts: &SolverOptions,
) -> Result<StepSolve> {
    let f = &reference.f_omega;
    let (raw, constant, report) = match reference.mu {
        1 => {
            if !backend.is_sphere() {
                return Err(Error::Unsupported("mu = 1 needs the sphere backend".into()));
            }
            let (tilde, c) = normalize_for_step(backend, prev, f)?;
            let rhs = f.try_zip_map(&tilde, |f, p| (f - p).exp())?;
            let (psi, report) = solve_poisson_step(backend, &rhs)?;
            (psi, c, report)
        }
        0 | -1 => {
            if backend.is_sphere() {
                return Err(Error::Unsupported(format!("mu = {} needs the torus backend", reference.mu)));
            }
            let a = (1 - reference.mu) as f64;
            let source = f.try_zip_map(prev, |f, p| f - p)?;
            let problem = SemilinearProblem::new(backend, source, a)?;
            let zero = backend.zeros();
            let attempt = solve_semilinear(&problem, guess.unwrap_or(&zero), opts);
            let (u, report) = match (attempt, guess) {
                (Ok(done), _) => done,
                (Err(Error::SolverStall { .. }), Some(_)) => solve_semilinear(&problem, &zero, opts)?,
                (Err(e), _) => return Err(e),
            };
            let mean = backend.mean(&u)?;
            (u.map(|x| x - mean), mean, report)
        }
        other => return Err(Error::InvalidArgument(format!("mu must be -1, 0 or 1, got {other}"))),
    };
    let margin = backend.conformal_density(&raw)?.min();
    if !(margin > 0.0) {
        return Err(Error::InternalConsistency {
            what: "step density lost positivity (resolution too low)",
            deviation: margin,
        });
    }
    Ok(StepSolve {
        psi: raw,
        constant,
        report,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub c0_increment: f64,
    /// `‖K − μ‖_∞` with `K = r/v` the Gauss curvature of `ω_{ψ_k}`.
    pub curvature_deviation: f64,
    /// `‖r − μ‖_∞` with `r` the Ricci density against `ω`.
    pub ricci_deviation: f64,
    pub functionals: Option<FunctionalValues>,
    pub solve: SolveReport,
    pub positivity_margin: f64,
    pub green_a: Option<f64>,
    pub green_slack: Option<f64>,
    /// Constant split off by this step's solve.
    pub normalization: f64,
    /// Mean of the un-normalized potential when every step keeps its raw constant
    /// (semilinear steps only; zero for `μ = 1`).
    pub raw_offset: f64,
    /// Möbius parameter applied after the solve (zero when not gauge fixed).
    pub gauge_t: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialRecord {
    pub functionals: Option<FunctionalValues>,
    /// Minimum of `1 + ½Δψ₀`; may be nonpositive for `μ = 1` starts.
    pub positivity_margin: f64,
    pub curvature_deviation: Option<f64>,
    pub ricci_deviation: Option<f64>,
    pub green_a_ref: Option<f64>,
    pub green_a: Option<f64>,
    pub green_slack: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub mu: i32,
    pub model: bool,
    pub reference: Reference,
    pub initial: InitialRecord,
    pub records: Vec<StepRecord>,
    pub final_psi: Field,
    pub converged: bool,
    /// `ψ_0, ψ_1, …` when `keep_states` is set.
    pub states: Vec<Field>,
}

#[derive(Debug)]
pub struct IterationError {
    pub error: Error,
    pub trajectory: Trajectory,
}

impl fmt::Display for IterationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} steps)", self.error, self.trajectory.records.len())
    }
}

impl std::error::Error for IterationError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

struct StateDiagnostics {
    curvature_deviation: f64,
    ricci_deviation: f64,
    functionals: Option<FunctionalValues>,
    green_a: Option<f64>,
    green_slack: Option<f64>,
}

fn diagnose(
    backend: &Backend,
    m: &MetricState,
    reference: &Reference,
    cfg: &IterationConfig,
    a_ref: Option<f64>,
) -> Result<StateDiagnostics> {
    let mu = reference.mu as f64;
    let (ricci, rest) = rayon::join(
        || ricci_form_relative(backend, m, &reference.ricci),
        || -> Result<(Option<FunctionalValues>, Option<f64>)> {
            let functionals = if cfg.diagnostics.functionals {
                Some(functionals_of(backend, m.psi(), reference, true)?)
            } else {
                None
            };
            let green = if cfg.diagnostics.green_bounds {
                let sources = default_sources(backend, cfg.diagnostics.source_count(backend));
                Some(green_function(backend, m, &sources)?.a)
            } else {
                None
            };
            Ok((functionals, green))
        },
    );
    let rd = ricci?;
    let (functionals, green_a) = rest?;
    let k = rd.gauss_curvature(m);
    let green_slack = match (a_ref, green_a) {
        (Some(a0), Some(ak)) => {
            let i = match &functionals {
                Some(f) => f.i,
                None => aubin_i(backend, m.psi())?,
            };
            Some(green_bound_slack(a0, ak, i, m.psi().sup_norm()))
        }
        _ => None,
    };
    Ok(StateDiagnostics {
        curvature_deviation: k.map(|x| x - mu).sup_norm(),
        ricci_deviation: rd.ricci_density.map(|x| x - mu).sup_norm(),
        functionals,
        green_a,
        green_slack,
    })
}

fn functionals_of(backend: &Backend, psi: &Field, reference: &Reference, kahler: bool) -> Result<FunctionalValues> {
    let i = aubin_i(backend, psi)?;
    let j = aubin_j(backend, psi)?;
    let ding = if reference.mu == 1 {
        Some(ding_functional(backend, psi, &reference.f_omega)?)
    } else {
        None
    };
    let k_energy = if kahler {
        match k_energy_with(backend, psi, &reference.ricci, K_ENERGY_NODES) {
            Ok(v) => Some(v),
            Err(Error::PathNotKahler { .. }) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(FunctionalValues { i, j, ding, k_energy })
}

fn initial_record(
    backend: &Backend,
    cfg: &IterationConfig,
    reference: &Reference,
) -> Result<InitialRecord> {
    let psi = &cfg.initial_psi;
    let margin = backend.conformal_density(psi)?.min();
    let a_ref = if cfg.diagnostics.green_bounds {
        let sources = default_sources(backend, cfg.diagnostics.source_count(backend));
        Some(green_function(backend, &MetricState::reference(backend), &sources)?.a)
    } else {
        None
    };
    match MetricState::new(backend, psi.clone()) {
        Ok(m) => {
            let d = diagnose(backend, &m, reference, cfg, a_ref)?;
            Ok(InitialRecord {
                functionals: d.functionals,
                positivity_margin: margin,
                curvature_deviation: Some(d.curvature_deviation),
                ricci_deviation: Some(d.ricci_deviation),
                green_a_ref: a_ref,
                green_a: d.green_a,
                green_slack: d.green_slack,
            })
        }
        Err(Error::NotKahler { .. }) => Ok(InitialRecord {
            functionals: if cfg.diagnostics.functionals {
                Some(functionals_of(backend, psi, reference, false)?)
            } else {
                None
            },
            positivity_margin: margin,
            curvature_deviation: None,
            ricci_deviation: None,
            green_a_ref: a_ref,
            green_a: None,
            green_slack: None,
        }),
        Err(e) => Err(e),
    }
}

/// Runs the iteration until the increment falls below the stop tolerance or
/// `max_steps` is reached. Deterministic in `cfg`.
pub fn run_iteration(backend: &Backend, cfg: &IterationConfig) -> std::result::Result<Trajectory, IterationError> {
    let reference = match Reference::new(backend, cfg.mu, cfg.synthetic_f.as_ref()) {
        Ok(r) => r,
        Err(error) => {
            let reference = Reference {
                mu: cfg.mu,
                f_omega: backend.zeros(),
                ricci: backend.zeros(),
                model: cfg.is_model(),
            };
            return Err(IterationError {
                error,
                trajectory: empty_trajectory(cfg, reference),
            });
        }
    };
    let violations = cfg.violations(backend);
    if !violations.is_empty() {
        return Err(IterationError {
            error: Error::InvalidArgument(violations.join("; ")),
            trajectory: empty_trajectory(cfg, reference),
        });
    }
    let mut traj = empty_trajectory(cfg, reference);
    match drive(backend, cfg, &mut traj) {
        Ok(()) => Ok(traj),
        Err(error) => Err(IterationError {
            error,
            trajectory: traj,
        }),
    }
}

fn empty_trajectory(cfg: &IterationConfig, reference: Reference) -> Trajectory {
    Trajectory {
        mu: cfg.mu,
        model: reference.model,
        initial: InitialRecord {
            functionals: None,
            positivity_margin: f64::NAN,
            curvature_deviation: None,
            ricci_deviation: None,
            green_a_ref: None,
            green_a: None,
            green_slack: None,
        },
        reference,
        records: Vec::new(),
        final_psi: cfg.initial_psi.clone(),
        converged: false,
        states: Vec::new(),
    }
}

fn drive(backend: &Backend, cfg: &IterationConfig, traj: &mut Trajectory) -> Result<()> {
    let reference = traj.reference.clone();
    traj.initial = initial_record(backend, cfg, &reference)?;
    let a_ref = traj.initial.green_a_ref;
    if cfg.keep_states {
        traj.states.push(cfg.initial_psi.clone());
    }

    let mean0 = backend.mean(&cfg.initial_psi)?;
    let mut prev = cfg.initial_psi.map(|x| x - mean0);
    let mut before_prev: Option<Field> = None;
    let mut raw_offset = mean0;
    let mut last_constant = 0.0;
    let a = (1 - cfg.mu) as f64;

    for k in 1..=cfg.max_steps {
        let guess = before_prev
            .as_ref()
            .map(|pp| prev.zip_map(pp, |p, q| 2.0 * p - q + last_constant));
        let step = ricci_step(backend, &prev, &reference, guess.as_ref(), &cfg.solver)?;
        let mut psi = step.psi;
        let mut gauge_t = 0.0;
        if cfg.gauge_fix {
            let fixed = mobius_gauge_fix(backend, &MetricState::new(backend, psi.clone())?)?;
            gauge_t = fixed.t;
            psi = fixed.state.into_psi();
            let mean = backend.mean(&psi)?;
            psi = psi.map(|x| x - mean);
        }
        if cfg.mu <= 0 {
            raw_offset = step.constant + raw_offset / a;
        }
        let m = MetricState::new(backend, psi.clone())?;
        let d = diagnose(backend, &m, &reference, cfg, a_ref)?;
        let increment = psi.sup_distance(&prev)?;
        traj.records.push(StepRecord {
            k,
            c0_increment: increment,
            curvature_deviation: d.curvature_deviation,
            ricci_deviation: d.ricci_deviation,
            functionals: d.functionals,
            solve: step.report,
            positivity_margin: m.positivity_margin(),
            green_a: d.green_a,
            green_slack: d.green_slack,
            normalization: step.constant,
            raw_offset: if cfg.mu <= 0 { raw_offset } else { 0.0 },
            gauge_t,
        });
        if cfg.keep_states {
            traj.states.push(psi.clone());
        }
        traj.final_psi = psi.clone();
        last_constant = step.constant;
        before_prev = Some(std::mem::replace(&mut prev, psi));
        if increment < cfg.stop_tol_sup {
            traj.converged = true;
            break;
        }
    }
    Ok(())
}

/// Degree cap applied along forward runs; higher modes grow like `l(l+1)/2` per step.
pub const DEFAULT_FORWARD_BAND: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardConfig {
    pub initial_psi: Field,
    pub max_steps: usize,
    /// Legendre modes above this degree are removed after every step.
    pub band_limit: Option<usize>,
    /// Sup distance below which a state counts as a return to the start.
    pub return_tol: f64,
}

impl ForwardConfig {
    pub fn new(initial_psi: Field) -> Self {
        ForwardConfig {
            initial_psi,
            max_steps: 20,
            band_limit: Some(DEFAULT_FORWARD_BAND),
            return_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardRecord {
    pub k: usize,
    pub c0_increment: f64,
    /// Minimum Ricci density of the state this step started from.
    pub min_ricci: f64,
    pub positivity_margin: f64,
    /// `‖K − 1‖_∞` of the new state.
    pub curvature_deviation: f64,
    /// Sup distance to the initial potential.
    pub distance_to_start: f64,
}

#[derive(Clone, Debug)]
pub struct ForwardTrajectory {
    pub records: Vec<ForwardRecord>,
    /// `Some(min r)` when the sequence stopped at a non-positive Ricci form.
    pub terminal_min_ricci: Option<f64>,
    /// Steps returning to the start although the curvature is not constant.
    pub periodic_returns: Vec<usize>,
    pub states: Vec<Field>,
}

fn band_limit(backend: &Backend, psi: &Field, band: usize) -> Result<Field> {
    match backend.transform(psi)? {
        SpectralCoeffs::Legendre { mut data } => {
            data.iter_mut().skip(band + 1).for_each(|c| *c = 0.0);
            backend.inverse_transform(&SpectralCoeffs::Legendre { data })
        }
        _ => Err(Error::Unsupported("forward iteration runs on the sphere".into())),
    }
}

/// Applies `forward_ricci` until positivity is lost or `max_steps` is reached.
pub fn run_forward_iteration(backend: &Backend, cfg: &ForwardConfig) -> Result<ForwardTrajectory> {
    if !backend.is_sphere() {
        return Err(Error::Unsupported("forward iteration runs on the sphere".into()));
    }
    let start = match cfg.band_limit {
        Some(b) => band_limit(backend, &cfg.initial_psi, b)?,
        None => cfg.initial_psi.clone(),
    };
    let mut m = MetricState::new(backend, start.clone())?;
    let constant_curvature = |m: &MetricState| -> Result<bool> {
        let rd = crate::kahler::ricci_form(backend, m)?;
        let k = rd.gauss_curvature(m);
        Ok(k.max() - k.min() <= 1e-8)
    };
    let start_is_round = constant_curvature(&m)?;
    let mut out = ForwardTrajectory {
        records: Vec::new(),
        terminal_min_ricci: None,
        periodic_returns: Vec::new(),
        states: vec![start.clone()],
    };
    for k in 1..=cfg.max_steps {
        let rd = crate::kahler::ricci_form(backend, &m)?;
        let next = match forward_ricci(backend, &m)? {
            ForwardOutcome::Positive(next) => next,
            ForwardOutcome::NotPositive { min_ricci } => {
                out.terminal_min_ricci = Some(min_ricci);
                break;
            }
        };
        let next = match cfg.band_limit {
            Some(b) => MetricState::new(backend, band_limit(backend, next.psi(), b)?)?,
            None => next,
        };
        let rd_next = crate::kahler::ricci_form(backend, &next)?;
        let curvature_deviation = rd_next.gauss_curvature(&next).map(|x| x - 1.0).sup_norm();
        let distance = next.psi().sup_distance(&start)?;
        if distance <= cfg.return_tol && !start_is_round {
            out.periodic_returns.push(k);
        }
        out.records.push(ForwardRecord {
            k,
            c0_increment: next.psi().sup_distance(m.psi())?,
            min_ricci: rd.min,
            positivity_margin: next.positivity_margin(),
            curvature_deviation,
            distance_to_start: distance,
        });
        out.states.push(next.psi().clone());
        m = next;
    }
    Ok(out)
}
