//! Subcommand bodies. Each returns its artifacts in memory; the caller writes them.

use crate::config::RunConfig;
use crate::output::{
    convergence_svg, field_json, forward_csv, forward_jsonl, read_field, summary_csv,
    trajectory_jsonl, JsonObject,
};
use ricci_core::functionals::{aubin_i, default_sources, green_bound_slack, green_function};
use ricci_core::iteration::{
    ricci_step, run_forward_iteration, run_iteration, ForwardTrajectory, Reference, Trajectory,
};
use ricci_core::kahler::{inverse_ricci, normalize_for_step, ricci_form, MetricState};
use ricci_core::oracles::{dense_poisson_solve, dense_semilinear_solve};
use ricci_core::{Backend, Error, Field};
use std::fs;
use std::io;
use std::path::Path;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

/// Agreement required between the first step and its dense oracle.
pub const ORACLE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    fn new(name: &str, contents: String) -> Self {
        Artifact {
            name: name.into(),
            contents,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CommandOutput {
    pub artifacts: Vec<Artifact>,
    pub message: String,
    pub exit: i32,
}

impl CommandOutput {
    fn fail(exit: i32, message: String) -> Self {
        CommandOutput {
            artifacts: Vec::new(),
            message,
            exit,
        }
    }
}

pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> io::Result<()> {
    if artifacts.is_empty() {
        return Ok(());
    }
    fs::create_dir_all(dir)?;
    for a in artifacts {
        fs::write(dir.join(&a.name), &a.contents)?;
    }
    Ok(())
}

/// First step recomputed with the dense oracles; returns the sup deviation.
pub fn oracle_first_step(cfg: &RunConfig) -> ricci_core::Result<f64> {
    let b = &cfg.backend;
    let it = &cfg.iteration;
    let reference = Reference::new(b, it.mu, it.synthetic_f.as_ref())?;
    let mean = b.mean(&it.initial_psi)?;
    let prev = it.initial_psi.map(|x| x - mean);
    let primary = ricci_step(b, &prev, &reference, None, &it.solver)?.psi;
    let f = &reference.f_omega;
    let oracle = if it.mu == 1 {
        let (tilde, _) = normalize_for_step(b, &prev, f)?;
        let rhs = f.try_zip_map(&tilde, |f, p| 2.0 * ((f - p).exp() - 1.0))?;
        dense_poisson_solve(b, &rhs)?
    } else {
        let source = f.try_zip_map(&prev, |f, p| f - p)?;
        let u = dense_semilinear_solve(b, &source, (1 - it.mu) as f64, 1e-13)?;
        let m = b.mean(&u)?;
        u.map(|x| x - m)
    };
    primary.sup_distance(&oracle)
}

/// The files `iterate` writes for a finished or failed run.
pub fn iteration_artifacts(
    cfg: &RunConfig,
    traj: &Trajectory,
    error: Option<&Error>,
    oracle: Option<f64>,
) -> Vec<Artifact> {
    let mut artifacts = Vec::new();
    if cfg.output.jsonl {
        artifacts.push(Artifact::new("trajectory.jsonl", trajectory_jsonl(cfg, traj, error, oracle)));
    }
    if cfg.output.csv {
        artifacts.push(Artifact::new("summary.csv", summary_csv(traj)));
    }
    if cfg.output.svg {
        artifacts.push(Artifact::new("convergence.svg", convergence_svg(traj)));
    }
    if cfg.output.states && error.is_none() {
        artifacts.push(Artifact::new("final_state.json", field_json(&cfg.backend, &traj.final_psi)));
    }
    artifacts
}

/// The files `fwd` writes.
pub fn forward_artifacts(cfg: &RunConfig, fwd: &ForwardTrajectory) -> Vec<Artifact> {
    let mut artifacts = Vec::new();
    if cfg.output.jsonl {
        artifacts.push(Artifact::new("forward.jsonl", forward_jsonl(cfg, fwd)));
    }
    if cfg.output.csv {
        artifacts.push(Artifact::new("forward.csv", forward_csv(fwd)));
    }
    if cfg.output.states {
        if let Some(last) = fwd.states.last() {
            artifacts.push(Artifact::new("final_state.json", field_json(&cfg.backend, last)));
        }
    }
    artifacts
}

pub fn iterate(cfg: &RunConfig) -> CommandOutput {
    let oracle = if cfg.oracle_mode {
        match oracle_first_step(cfg) {
            Ok(d) => Some(d),
            Err(e) => return CommandOutput::fail(EXIT_SOLVER, format!("oracle cross-check failed: {e}")),
        }
    } else {
        None
    };
    let (traj, error) = match run_iteration(&cfg.backend, &cfg.iteration) {
        Ok(t) => (t, None),
        Err(e) => (e.trajectory, Some(e.error)),
    };
    let artifacts = iteration_artifacts(cfg, &traj, error.as_ref(), oracle);
    let steps = traj.records.len();
    let (message, exit) = match (&error, oracle) {
        (Some(e), _) => (format!("solver error after {steps} steps: {e}"), EXIT_SOLVER),
        (None, Some(d)) if !(d <= ORACLE_TOL) => (
            format!("first step disagrees with the dense oracle by {d:.3e} (limit {ORACLE_TOL:.0e})"),
            EXIT_INVARIANT,
        ),
        (None, _) => {
            let last = traj.records.last();
            (
                format!(
                    "{} after {steps} steps: increment {:.3e}, curvature deviation {:.3e}",
                    if traj.converged { "converged" } else { "stopped" },
                    last.map_or(0.0, |r| r.c0_increment),
                    last.map_or(0.0, |r| r.curvature_deviation),
                ),
                EXIT_OK,
            )
        }
    };
    CommandOutput {
        artifacts,
        message,
        exit,
    }
}

pub fn forward(cfg: &RunConfig) -> CommandOutput {
    if !cfg.backend.is_sphere() {
        return CommandOutput::fail(EXIT_CONFIG, "fwd needs the sphere backend".into());
    }
    let fwd = match run_forward_iteration(&cfg.backend, &cfg.forward) {
        Ok(f) => f,
        Err(e) => return CommandOutput::fail(EXIT_SOLVER, format!("forward iteration failed: {e}")),
    };
    let message = match fwd.terminal_min_ricci {
        Some(m) => format!(
            "positivity lost after {} steps (min Ricci density {m:.3e})",
            fwd.records.len()
        ),
        None => format!("{} steps, Ricci form stayed positive", fwd.records.len()),
    };
    CommandOutput {
        artifacts: forward_artifacts(cfg, &fwd),
        message,
        exit: EXIT_OK,
    }
}

fn load_field(backend: &Backend, path: Option<&Path>, key: &str) -> Result<Field, CommandOutput> {
    let path = path.ok_or_else(|| CommandOutput::fail(EXIT_CONFIG, format!("config needs {key}")))?;
    let text = fs::read_to_string(path).map_err(|e| {
        CommandOutput::fail(EXIT_CONFIG, format!("cannot read {}: {e}", path.display()))
    })?;
    read_field(backend, &text)
        .map_err(|e| CommandOutput::fail(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

pub fn invricci(cfg: &RunConfig) -> CommandOutput {
    if !cfg.backend.is_sphere() {
        return CommandOutput::fail(EXIT_CONFIG, "invricci needs the sphere backend".into());
    }
    let h = match load_field(&cfg.backend, cfg.target_file.as_deref(), "target_file") {
        Ok(h) => h,
        Err(out) => return out,
    };
    let exit_for = |e: &Error| match e {
        Error::ClassMismatch { .. } | Error::InvalidArgument(_) => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    };
    let m = match inverse_ricci(&cfg.backend, &h) {
        Ok(m) => m,
        Err(e) => return CommandOutput::fail(exit_for(&e), format!("inverse Ricci failed: {e}")),
    };
    let deviation = match ricci_form(&cfg.backend, &m).and_then(|r| r.ricci_density.sup_distance(&h)) {
        Ok(d) => d,
        Err(e) => return CommandOutput::fail(EXIT_SOLVER, format!("verification failed: {e}")),
    };
    let report = JsonObject::new()
        .text("record", "inverse_ricci")
        .num("ricci_deviation", deviation)
        .num("positivity_margin", m.positivity_margin())
        .num("psi_sup", m.psi().sup_norm())
        .finish();
    CommandOutput {
        artifacts: vec![
            Artifact::new("inverse_ricci.json", format!("{report}\n")),
            Artifact::new("inverse_ricci_state.json", field_json(&cfg.backend, m.psi())),
        ],
        message: format!("solved; Ric of the result matches the target to {deviation:.3e}"),
        exit: EXIT_OK,
    }
}

pub fn green(cfg: &RunConfig) -> CommandOutput {
    let b = &cfg.backend;
    let psi = match load_field(b, cfg.state_file.as_deref(), "state_file") {
        Ok(p) => p,
        Err(out) => return out,
    };
    let m = match MetricState::new(b, psi) {
        Ok(m) => m,
        Err(e) => return CommandOutput::fail(EXIT_CONFIG, format!("stored state: {e}")),
    };
    let sources = default_sources(b, cfg.iteration.diagnostics.source_count(b));
    let result = green_function(b, &MetricState::reference(b), &sources).and_then(|g0| {
        let gk = green_function(b, &m, &sources)?;
        let i = aubin_i(b, m.psi())?;
        Ok((g0.a, gk.a, i))
    });
    let (a0, ak, i) = match result {
        Ok(x) => x,
        Err(e) => return CommandOutput::fail(EXIT_SOLVER, format!("Green solve failed: {e}")),
    };
    let mean = b.mean(m.psi()).unwrap_or(0.0);
    let sup = m.psi().map(|x| x - mean).sup_norm();
    let slack = green_bound_slack(a0, ak, i, sup);
    let report = JsonObject::new()
        .text("record", "green")
        .int("sources", sources.len() as i64)
        .num("a_ref", a0)
        .num("a", ak)
        .num("I", i)
        .num("psi_sup", sup)
        .num("slack", slack)
        .finish();
    CommandOutput {
        artifacts: vec![Artifact::new("green.json", format!("{report}\n"))],
        message: format!("A_ref {a0:.6e}, A {ak:.6e}, slack {slack:.6e}"),
        exit: if slack >= -1e-6 { EXIT_OK } else { EXIT_INVARIANT },
    }
}
