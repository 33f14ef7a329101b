//! JSON run configuration: strict parsing, defaults, and full validation.
//!
//! Every violation found is reported, not just the first. A config that parses
//! has a constructed backend and initial data, so nothing can fail later for
//! reasons visible in the file.

use ricci_core::elliptic::{LinearStrategy, SolverOptions};
use ricci_core::iteration::{Diagnostics, ForwardConfig, IterationConfig, DEFAULT_MAX_STEPS, DEFAULT_STOP_TOL};
use ricci_core::oracles::MAX_ORACLE_RESOLUTION;
use ricci_core::{Backend, Field, GridTag, ModeId};
use serde_json::{Map, Value};
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

pub const DEFAULT_SPHERE_RESOLUTION: usize = 256;
pub const DEFAULT_TORUS_RESOLUTION: usize = 128;

#[derive(Debug)]
pub enum ConfigError {
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Syntax {
                line,
                column,
                message,
            } => write!(f, "config syntax error at line {line}, column {column}: {message}"),
            ConfigError::Invalid(v) => {
                writeln!(f, "config rejected ({} violations):", v.len())?;
                for item in v {
                    writeln!(f, "  - {item}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// How the initial potential (or the synthetic Ricci potential) is built.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSpec {
    Zero,
    /// Sum of named basis functions.
    Modes(Vec<(ModeId, f64)>),
    /// Seeded band-limited field scaled so that `sup|½Δψ| = amplitude`.
    Random { band: usize, amplitude: f64, seed: u64 },
}

impl DataSpec {
    pub fn build(&self, backend: &Backend) -> ricci_core::Result<Field> {
        match self {
            DataSpec::Zero => Ok(backend.zeros()),
            DataSpec::Modes(terms) => backend.modes(terms),
            DataSpec::Random {
                band,
                amplitude,
                seed,
            } => backend.random_potential(*band, *amplitude, *seed),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DataSpec::Zero => "zero".into(),
            DataSpec::Modes(terms) => terms
                .iter()
                .map(|(id, a)| format!("{a}*{id}"))
                .collect::<Vec<_>>()
                .join(" + "),
            DataSpec::Random {
                band,
                amplitude,
                seed,
            } => format!("random(band={band}, amplitude={amplitude}, seed={seed})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OutputFlags {
    pub csv: bool,
    pub jsonl: bool,
    pub svg: bool,
    /// Write the final potential as a field file.
    pub states: bool,
}

impl Default for OutputFlags {
    fn default() -> Self {
        OutputFlags {
            csv: true,
            jsonl: true,
            svg: true,
            states: true,
        }
    }
}

#[derive(Debug)]
pub struct RunConfig {
    pub backend: Backend,
    pub iteration: IterationConfig,
    pub initial_spec: DataSpec,
    pub synthetic_spec: Option<DataSpec>,
    pub forward: ForwardConfig,
    pub output: OutputFlags,
    /// Cross-check the first step against the dense oracles (resolution ≤ 32).
    pub oracle_mode: bool,
    /// Target Ricci density for `invricci`.
    pub target_file: Option<PathBuf>,
    /// Stored potential for `green`.
    pub state_file: Option<PathBuf>,
}

/// Parses and validates a config. Relative paths resolve against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut v = Validator::default();
    let Some(root) = value.as_object() else {
        return Err(ConfigError::Invalid(vec!["top level must be a JSON object".into()]));
    };
    v.known(
        root,
        "",
        &[
            "backend",
            "mu",
            "initial",
            "synthetic_f",
            "max_steps",
            "stop_tol_sup",
            "gauge_fix",
            "diagnostics",
            "solver",
            "output",
            "oracle_mode",
            "forward",
            "target_file",
            "state_file",
        ],
    );

    let backend = v.backend(root.get("backend"));
    let initial_spec = v.data_spec(root.get("initial"), "initial");
    let synthetic_spec = match root.get("synthetic_f") {
        None | Some(Value::Null) => None,
        Some(x) => v.data_spec(Some(x), "synthetic_f"),
    };
    let mu = v.int(root, "mu", "mu");
    let max_steps = v.usize(root, "max_steps", "max_steps").unwrap_or(DEFAULT_MAX_STEPS);
    let stop_tol = v.float(root, "stop_tol_sup", "stop_tol_sup").unwrap_or(DEFAULT_STOP_TOL);
    let gauge_fix = v.bool(root, "gauge_fix", "gauge_fix");
    let oracle_mode = v.bool(root, "oracle_mode", "oracle_mode").unwrap_or(false);
    let diagnostics = v.diagnostics(root.get("diagnostics"));
    let solver = v.solver(root.get("solver"));
    let output = v.output(root.get("output"));
    let forward_spec = v.forward(root.get("forward"));
    let target_file = v.path(root, "target_file", base_dir);
    let state_file = v.path(root, "state_file", base_dir);

    let Some(backend) = backend else {
        return Err(ConfigError::Invalid(v.errors));
    };
    let initial_spec = initial_spec.unwrap_or(DataSpec::Zero);
    let initial = match initial_spec.build(&backend) {
        Ok(f) => Some(f),
        Err(e) => {
            v.push(format!("initial: {e}"));
            None
        }
    };
    let synthetic = synthetic_spec.as_ref().and_then(|s| match s.build(&backend) {
        Ok(f) => Some(f),
        Err(e) => {
            v.push(format!("synthetic_f: {e}"));
            None
        }
    });
    let mu = mu.map(|m| m as i32).unwrap_or(if synthetic_spec.is_some() {
        -1
    } else {
        backend.canonical_sign()
    });
    let largest = match backend.tag() {
        GridTag::Sphere { n } => n,
        GridTag::Torus { n1, n2, .. } => n1.max(n2),
    };
    if oracle_mode && largest > MAX_ORACLE_RESOLUTION {
        v.push(format!(
            "oracle_mode needs at most {MAX_ORACLE_RESOLUTION} nodes per direction, got {largest}"
        ));
    }

    let mut iteration = IterationConfig::new(&backend, mu, initial.clone().unwrap_or_else(|| backend.zeros()));
    iteration.synthetic_f = synthetic;
    iteration.max_steps = max_steps;
    iteration.stop_tol_sup = stop_tol;
    if let Some(g) = gauge_fix {
        iteration.gauge_fix = g;
    }
    iteration.diagnostics = diagnostics;
    iteration.solver = solver;
    if initial.is_some() && (synthetic_spec.is_none() || iteration.synthetic_f.is_some()) {
        v.errors.extend(iteration.violations(&backend));
    }

    let mut forward = ForwardConfig::new(iteration.initial_psi.clone());
    if let Some((steps, band, tol)) = forward_spec {
        forward.max_steps = steps.unwrap_or(forward.max_steps);
        forward.band_limit = band.unwrap_or(forward.band_limit);
        forward.return_tol = tol.unwrap_or(forward.return_tol);
    }

    if !v.errors.is_empty() {
        return Err(ConfigError::Invalid(v.errors));
    }
    Ok(RunConfig {
        backend,
        iteration,
        initial_spec,
        synthetic_spec,
        forward,
        output,
        oracle_mode,
        target_file,
        state_file,
    })
}

#[derive(Default)]
struct Validator {
    errors: Vec<String>,
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

impl Validator {
    fn push(&mut self, msg: String) {
        self.errors.push(msg);
    }

    fn known(&mut self, obj: &Map<String, Value>, prefix: &str, keys: &[&str]) {
        for k in obj.keys() {
            if !keys.contains(&k.as_str()) {
                self.push(format!("unknown key {:?}", join(prefix, k)));
            }
        }
    }

    fn object<'a>(&mut self, value: Option<&'a Value>, path: &str) -> Option<&'a Map<String, Value>> {
        match value {
            None | Some(Value::Null) => None,
            Some(Value::Object(m)) => Some(m),
            Some(_) => {
                self.push(format!("{path} must be an object"));
                None
            }
        }
    }

    fn float(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<f64> {
        match obj.get(key) {
            None | Some(Value::Null) => None,
            Some(Value::Number(n)) => n.as_f64(),
            Some(_) => {
                self.push(format!("{path} must be a number"));
                None
            }
        }
    }

    fn int(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<i64> {
        match obj.get(key) {
            None | Some(Value::Null) => None,
            Some(Value::Number(n)) if n.is_i64() => n.as_i64(),
            Some(_) => {
                self.push(format!("{path} must be an integer"));
                None
            }
        }
    }

    fn usize(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<usize> {
        match obj.get(key) {
            None | Some(Value::Null) => None,
            Some(Value::Number(n)) if n.is_u64() => Some(n.as_u64().unwrap() as usize),
            Some(_) => {
                self.push(format!("{path} must be a nonnegative integer"));
                None
            }
        }
    }

    fn bool(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<bool> {
        match obj.get(key) {
            None | Some(Value::Null) => None,
            Some(Value::Bool(b)) => Some(*b),
            Some(_) => {
                self.push(format!("{path} must be true or false"));
                None
            }
        }
    }

    fn path(&mut self, obj: &Map<String, Value>, key: &str, base: &Path) -> Option<PathBuf> {
        match obj.get(key) {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(base.join(s)),
            Some(_) => {
                self.push(format!("{key} must be a string path"));
                None
            }
        }
    }

    fn backend(&mut self, value: Option<&Value>) -> Option<Backend> {
        let Some(obj) = self.object(value, "backend") else {
            if value.is_none() || value == Some(&Value::Null) {
                self.push("backend is required".into());
            }
            return None;
        };
        self.known(obj, "backend", &["kind", "resolution", "lengths", "oversample"]);
        let oversample = self.bool(obj, "oversample", "backend.oversample").unwrap_or(true);
        let kind = match obj.get("kind") {
            Some(Value::String(s)) => s.as_str(),
            _ => {
                self.push("backend.kind must be \"sphere\" or \"torus\"".into());
                return None;
            }
        };
        match kind {
            "sphere" => {
                if obj.contains_key("lengths") {
                    self.push("backend.lengths applies to the torus only".into());
                }
                let n = self
                    .usize(obj, "resolution", "backend.resolution")
                    .unwrap_or(DEFAULT_SPHERE_RESOLUTION);
                self.finish_backend(Backend::sphere_with(n, oversample))
            }
            "torus" => {
                let (n1, n2) = match obj.get("resolution") {
                    None | Some(Value::Null) => (DEFAULT_TORUS_RESOLUTION, DEFAULT_TORUS_RESOLUTION),
                    Some(Value::Number(n)) if n.is_u64() => {
                        let n = n.as_u64().unwrap() as usize;
                        (n, n)
                    }
                    Some(Value::Array(a)) if a.len() == 2 && a.iter().all(|x| x.is_u64()) => {
                        (a[0].as_u64().unwrap() as usize, a[1].as_u64().unwrap() as usize)
                    }
                    Some(_) => {
                        self.push("backend.resolution must be an integer or a pair of integers".into());
                        return None;
                    }
                };
                let (l1, l2) = match obj.get("lengths") {
                    None | Some(Value::Null) => (2.0 * PI, 2.0 * PI),
                    Some(Value::Array(a)) if a.len() == 2 && a.iter().all(Value::is_number) => {
                        (a[0].as_f64().unwrap(), a[1].as_f64().unwrap())
                    }
                    Some(_) => {
                        self.push("backend.lengths must be a pair of numbers".into());
                        return None;
                    }
                };
                self.finish_backend(Backend::torus_with(n1, n2, l1, l2, oversample))
            }
            other => {
                self.push(format!("backend.kind must be \"sphere\" or \"torus\", got {other:?}"));
                None
            }
        }
    }

    fn finish_backend(&mut self, b: ricci_core::Result<Backend>) -> Option<Backend> {
        match b {
            Ok(b) => Some(b),
            Err(e) => {
                self.push(format!("backend: {e}"));
                None
            }
        }
    }

    fn data_spec(&mut self, value: Option<&Value>, path: &str) -> Option<DataSpec> {
        let obj = self.object(value, path)?;
        self.known(obj, path, &["modes", "random"]);
        match (obj.get("modes"), obj.get("random")) {
            (Some(_), Some(_)) => {
                self.push(format!("{path}: give either modes or random, not both"));
                None
            }
            (Some(Value::Object(m)), None) => {
                let mut terms = Vec::new();
                for (id, amp) in m {
                    let id_parsed = id.parse::<ModeId>();
                    match (id_parsed, amp.as_f64()) {
                        (Ok(mode), Some(a)) => terms.push((mode, a)),
                        (Err(e), _) => self.push(format!("{path}.modes: {e}")),
                        (_, None) => self.push(format!("{path}.modes.{id} must be a number")),
                    }
                }
                Some(DataSpec::Modes(terms))
            }
            (Some(_), None) => {
                self.push(format!("{path}.modes must be an object mapping mode ids to amplitudes"));
                None
            }
            (None, Some(r)) => {
                let p = format!("{path}.random");
                let r = self.object(Some(r), &p)?;
                self.known(r, &p, &["band", "amplitude", "seed"]);
                let band = self.usize(r, "band", &format!("{p}.band"));
                let amplitude = self.float(r, "amplitude", &format!("{p}.amplitude"));
                let seed = self.usize(r, "seed", &format!("{p}.seed"));
                match (band, amplitude) {
                    (Some(band), Some(amplitude)) => Some(DataSpec::Random {
                        band,
                        amplitude,
                        seed: seed.unwrap_or(0) as u64,
                    }),
                    _ => {
                        self.push(format!("{p} needs band and amplitude"));
                        None
                    }
                }
            }
            (None, None) => Some(DataSpec::Zero),
        }
    }

    fn diagnostics(&mut self, value: Option<&Value>) -> Diagnostics {
        let mut d = Diagnostics::default();
        if let Some(obj) = self.object(value, "diagnostics") {
            self.known(obj, "diagnostics", &["functionals", "green_bounds", "green_sources"]);
            if let Some(b) = self.bool(obj, "functionals", "diagnostics.functionals") {
                d.functionals = b;
            }
            if let Some(b) = self.bool(obj, "green_bounds", "diagnostics.green_bounds") {
                d.green_bounds = b;
            }
            if let Some(n) = self.usize(obj, "green_sources", "diagnostics.green_sources") {
                if n == 0 {
                    self.push("diagnostics.green_sources must be positive".into());
                }
                d.green_sources = Some(n);
            }
        }
        d
    }

    fn solver(&mut self, value: Option<&Value>) -> SolverOptions {
        let mut s = SolverOptions::default();
        if let Some(obj) = self.object(value, "solver") {
            self.known(
                obj,
                "solver",
                &["tol_sup", "max_newton", "max_halvings", "linear", "cg_max_iter", "polish"],
            );
            if let Some(t) = self.float(obj, "tol_sup", "solver.tol_sup") {
                s.tol_sup = t;
            }
            if let Some(n) = self.usize(obj, "max_newton", "solver.max_newton") {
                s.max_newton = n;
            }
            if let Some(n) = self.usize(obj, "max_halvings", "solver.max_halvings") {
                s.max_halvings = n;
            }
            if let Some(n) = self.usize(obj, "cg_max_iter", "solver.cg_max_iter") {
                s.cg_max_iter = n;
            }
            if let Some(b) = self.bool(obj, "polish", "solver.polish") {
                s.polish = b;
            }
            match obj.get("linear") {
                None | Some(Value::Null) => {}
                Some(Value::String(x)) if x == "auto" => s.linear = LinearStrategy::Auto,
                Some(Value::String(x)) if x == "pcg" => s.linear = LinearStrategy::Pcg,
                Some(Value::String(x)) if x == "dense" => s.linear = LinearStrategy::Dense,
                Some(_) => self.push("solver.linear must be \"auto\", \"pcg\" or \"dense\"".into()),
            }
        }
        s
    }

    fn output(&mut self, value: Option<&Value>) -> OutputFlags {
        let mut o = OutputFlags::default();
        if let Some(obj) = self.object(value, "output") {
            self.known(obj, "output", &["csv", "jsonl", "svg", "states"]);
            o.csv = self.bool(obj, "csv", "output.csv").unwrap_or(o.csv);
            o.jsonl = self.bool(obj, "jsonl", "output.jsonl").unwrap_or(o.jsonl);
            o.svg = self.bool(obj, "svg", "output.svg").unwrap_or(o.svg);
            o.states = self.bool(obj, "states", "output.states").unwrap_or(o.states);
        }
        o
    }

    #[allow(clippy::type_complexity)]
    fn forward(&mut self, value: Option<&Value>) -> Option<(Option<usize>, Option<Option<usize>>, Option<f64>)> {
        let obj = self.object(value, "forward")?;
        self.known(obj, "forward", &["max_steps", "band_limit", "return_tol"]);
        let steps = self.usize(obj, "max_steps", "forward.max_steps");
        let band = match obj.get("band_limit") {
            None => None,
            Some(Value::Null) => Some(None),
            Some(Value::Number(n)) if n.is_u64() => Some(Some(n.as_u64().unwrap() as usize)),
            Some(_) => {
                self.push("forward.band_limit must be a nonnegative integer or null".into());
                None
            }
        };
        let tol = self.float(obj, "return_tol", "forward.return_tol");
        if let Some(t) = tol {
            if !(t > 0.0) {
                self.push("forward.return_tol must be positive".into());
            }
        }
        Some((steps, band, tol))
    }
}
