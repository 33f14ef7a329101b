//! Artifact rendering. Every renderer is a pure function of its inputs, so two
//! runs of the same config produce the same bytes.
//!
//! Numbers are written with 17 significant digits; CSV and JSONL share the
//! formatter.

use crate::config::RunConfig;
use ricci_core::functionals::FunctionalValues;
use ricci_core::iteration::{ForwardTrajectory, StepRecord, Trajectory};
use ricci_core::{Backend, Error, Field, GridTag};
use serde_json::Value;
use std::fmt::Write as _;

/// `{:.16e}`, or `None` for non-finite values.
pub fn number(x: f64) -> Option<String> {
    x.is_finite().then(|| format!("{x:.16e}"))
}

fn csv_cell(x: Option<f64>) -> String {
    x.and_then(number).unwrap_or_default()
}

/// Flat JSON object writer with fixed number formatting.
#[derive(Default)]
pub struct JsonObject {
    buf: String,
}

impl JsonObject {
    pub fn new() -> Self {
        JsonObject::default()
    }

    fn key(&mut self, key: &str) {
        self.buf.push(if self.buf.is_empty() { '{' } else { ',' });
        self.buf.push_str(&serde_json::to_string(key).expect("string keys serialize"));
        self.buf.push(':');
    }

    pub fn num(mut self, key: &str, x: f64) -> Self {
        self.key(key);
        self.buf.push_str(number(x).as_deref().unwrap_or("null"));
        self
    }

    pub fn opt(self, key: &str, x: Option<f64>) -> Self {
        self.num(key, x.unwrap_or(f64::NAN))
    }

    pub fn int(mut self, key: &str, x: i64) -> Self {
        self.key(key);
        write!(self.buf, "{x}").unwrap();
        self
    }

    pub fn flag(mut self, key: &str, x: bool) -> Self {
        self.key(key);
        self.buf.push_str(if x { "true" } else { "false" });
        self
    }

    pub fn text(mut self, key: &str, x: &str) -> Self {
        self.key(key);
        self.buf.push_str(&serde_json::to_string(x).expect("strings serialize"));
        self
    }

    /// Inserts pre-rendered JSON.
    pub fn raw(mut self, key: &str, json: &str) -> Self {
        self.key(key);
        self.buf.push_str(json);
        self
    }

    pub fn finish(mut self) -> String {
        if self.buf.is_empty() {
            self.buf.push('{');
        }
        self.buf.push('}');
        self.buf
    }
}

fn functional_fields(o: JsonObject, f: Option<&FunctionalValues>) -> JsonObject {
    o.opt("I", f.map(|f| f.i))
        .opt("J", f.map(|f| f.j))
        .opt("ding", f.and_then(|f| f.ding))
        .opt("k_energy", f.and_then(|f| f.k_energy))
}

fn step_json(r: &StepRecord) -> String {
    let o = JsonObject::new()
        .text("record", "step")
        .int("k", r.k as i64)
        .num("c0_increment", r.c0_increment)
        .num("curvature_deviation", r.curvature_deviation)
        .num("ricci_deviation", r.ricci_deviation);
    functional_fields(o, r.functionals.as_ref())
        .num("positivity_margin", r.positivity_margin)
        .opt("green_a", r.green_a)
        .opt("green_slack", r.green_slack)
        .num("normalization", r.normalization)
        .num("raw_offset", r.raw_offset)
        .num("gauge_t", r.gauge_t)
        .int("newton_iterations", r.solve.iterations as i64)
        .num("solve_residual", r.solve.final_residual_sup)
        .int("damping_events", r.solve.damping_events as i64)
        .int("linear_iterations", r.solve.linear_iterations as i64)
        .finish()
}

pub fn grid_json(tag: GridTag) -> String {
    match tag {
        GridTag::Sphere { n } => JsonObject::new().text("kind", "sphere").int("n", n as i64).finish(),
        GridTag::Torus {
            n1,
            n2,
            l1_bits,
            l2_bits,
        } => JsonObject::new()
            .text("kind", "torus")
            .int("n1", n1 as i64)
            .int("n2", n2 as i64)
            .num("l1", f64::from_bits(l1_bits))
            .num("l2", f64::from_bits(l2_bits))
            .finish(),
    }
}

/// `trajectory.jsonl`: header, initial record (`k = 0`), steps, then an end or error trailer.
pub fn trajectory_jsonl(
    cfg: &RunConfig,
    traj: &Trajectory,
    error: Option<&Error>,
    oracle_deviation: Option<f64>,
) -> String {
    let it = &cfg.iteration;
    let mut lines = Vec::with_capacity(traj.records.len() + 4);
    lines.push(
        JsonObject::new()
            .text("record", "header")
            .raw("grid", &grid_json(cfg.backend.tag()))
            .int("mu", it.mu as i64)
            .flag("model", traj.model)
            .text("initial", &cfg.initial_spec.describe())
            .text(
                "synthetic_f",
                &cfg.synthetic_spec.as_ref().map(|s| s.describe()).unwrap_or_else(|| "none".into()),
            )
            .int("max_steps", it.max_steps as i64)
            .num("stop_tol_sup", it.stop_tol_sup)
            .flag("gauge_fix", it.gauge_fix)
            .opt("green_a_ref", traj.initial.green_a_ref)
            .finish(),
    );
    if let Some(d) = oracle_deviation {
        lines.push(
            JsonObject::new()
                .text("record", "oracle")
                .num("first_step_deviation", d)
                .finish(),
        );
    }
    let ini = &traj.initial;
    if !ini.positivity_margin.is_nan() {
        let o = JsonObject::new()
            .text("record", "initial")
            .int("k", 0)
            .opt("curvature_deviation", ini.curvature_deviation)
            .opt("ricci_deviation", ini.ricci_deviation);
        lines.push(
            functional_fields(o, ini.functionals.as_ref())
                .num("positivity_margin", ini.positivity_margin)
                .opt("green_a", ini.green_a)
                .opt("green_slack", ini.green_slack)
                .finish(),
        );
    }
    lines.extend(traj.records.iter().map(step_json));
    let steps = traj.records.len() as i64;
    lines.push(match error {
        Some(e) => JsonObject::new()
            .text("record", "error")
            .int("steps", steps)
            .text("message", &e.to_string())
            .finish(),
        None => JsonObject::new()
            .text("record", "end")
            .int("steps", steps)
            .flag("converged", traj.converged)
            .finish(),
    });
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

pub const SUMMARY_HEADER: &str =
    "k,c0_increment,curvature_deviation,I,J,ding,k_energy,positivity_margin,green_slack";

/// `summary.csv`; the `k = 0` row describes the initial potential.
pub fn summary_csv(traj: &Trajectory) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    let row = |k: usize,
               inc: Option<f64>,
               curv: Option<f64>,
               f: Option<&FunctionalValues>,
               margin: f64,
               slack: Option<f64>| {
        [
            k.to_string(),
            csv_cell(inc),
            csv_cell(curv),
            csv_cell(f.map(|f| f.i)),
            csv_cell(f.map(|f| f.j)),
            csv_cell(f.and_then(|f| f.ding)),
            csv_cell(f.and_then(|f| f.k_energy)),
            csv_cell(Some(margin)),
            csv_cell(slack),
        ]
        .join(",")
    };
    let ini = &traj.initial;
    if !ini.positivity_margin.is_nan() {
        out.push_str(&row(
            0,
            None,
            ini.curvature_deviation,
            ini.functionals.as_ref(),
            ini.positivity_margin,
            ini.green_slack,
        ));
        out.push('\n');
    }
    for r in &traj.records {
        out.push_str(&row(
            r.k,
            Some(r.c0_increment),
            Some(r.curvature_deviation),
            r.functionals.as_ref(),
            r.positivity_margin,
            r.green_slack,
        ));
        out.push('\n');
    }
    out
}

/// Log-scale plot of increments and curvature deviations, self-contained SVG.
pub fn convergence_svg(traj: &Trajectory) -> String {
    let series: [(&str, &str, Vec<(f64, f64)>); 2] = [
        (
            "increment",
            "#1f5fbf",
            traj.records.iter().map(|r| (r.k as f64, r.c0_increment)).collect(),
        ),
        (
            "curvature deviation",
            "#c0392b",
            traj.records.iter().map(|r| (r.k as f64, r.curvature_deviation)).collect(),
        ),
    ];
    log_plot("Ricci iteration", "step k", &series)
}

fn log_plot(title: &str, xlabel: &str, series: &[(&str, &str, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 50.0;
    const FLOOR: f64 = 1e-17;

    let positive: Vec<f64> = series
        .iter()
        .flat_map(|s| s.2.iter().map(|p| p.1.max(FLOOR)))
        .filter(|v| v.is_finite())
        .collect();
    let (lo, hi) = if positive.is_empty() {
        (-1.0, 0.0)
    } else {
        let lo = positive.iter().cloned().fold(f64::INFINITY, f64::min).log10().floor();
        let hi = positive.iter().cloned().fold(0.0, f64::max).log10().ceil();
        (lo, if hi > lo { hi } else { lo + 1.0 })
    };
    let xmax = series
        .iter()
        .flat_map(|s| s.2.iter().map(|p| p.0))
        .fold(1.0, f64::max);
    let px = |x: f64| LEFT + x / xmax * (W - LEFT - RIGHT);
    let py = |y: f64| TOP + (hi - y.max(FLOOR).log10()) / (hi - lo) * (H - TOP - BOTTOM);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{title}</text>"#, W / 2.0).unwrap();
    writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    )
    .unwrap();
    let decades = (hi - lo) as i64;
    let stride = (decades / 8).max(1);
    for d in (0..=decades).step_by(stride as usize) {
        let e = lo + d as f64;
        let y = py(10f64.powf(e));
        writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"##,
            W - RIGHT,
            LEFT - 6.0,
            y + 4.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{xlabel}</text><text x="{LEFT}" y="{:.2}" text-anchor="middle">0</text><text x="{:.2}" y="{:.2}" text-anchor="middle">{xmax}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 12.0,
        H - BOTTOM + 16.0,
        W - RIGHT,
        H - BOTTOM + 16.0
    )
    .unwrap();
    for (i, (name, color, pts)) in series.iter().enumerate() {
        if !pts.is_empty() {
            let path: Vec<String> = pts
                .iter()
                .filter(|p| p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            )
            .unwrap();
        }
        let ly = TOP + 16.0 + 16.0 * i as f64;
        writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{name}</text>"#,
            W - RIGHT - 150.0,
            W - RIGHT - 130.0,
            W - RIGHT - 124.0,
            ly + 4.0
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

pub const FORWARD_HEADER: &str =
    "k,c0_increment,min_ricci,positivity_margin,curvature_deviation,distance_to_start";

pub fn forward_csv(f: &ForwardTrajectory) -> String {
    let mut out = String::from(FORWARD_HEADER);
    out.push('\n');
    for r in &f.records {
        let cells = [
            r.k.to_string(),
            csv_cell(Some(r.c0_increment)),
            csv_cell(Some(r.min_ricci)),
            csv_cell(Some(r.positivity_margin)),
            csv_cell(Some(r.curvature_deviation)),
            csv_cell(Some(r.distance_to_start)),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn forward_jsonl(cfg: &RunConfig, f: &ForwardTrajectory) -> String {
    let mut lines = vec![JsonObject::new()
        .text("record", "header")
        .raw("grid", &grid_json(cfg.backend.tag()))
        .text("initial", &cfg.initial_spec.describe())
        .int("max_steps", cfg.forward.max_steps as i64)
        .raw(
            "band_limit",
            &cfg.forward.band_limit.map_or_else(|| "null".to_string(), |b| b.to_string()),
        )
        .finish()];
    for r in &f.records {
        lines.push(
            JsonObject::new()
                .text("record", "step")
                .int("k", r.k as i64)
                .num("c0_increment", r.c0_increment)
                .num("min_ricci", r.min_ricci)
                .num("positivity_margin", r.positivity_margin)
                .num("curvature_deviation", r.curvature_deviation)
                .num("distance_to_start", r.distance_to_start)
                .finish(),
        );
    }
    let returns: Vec<String> = f.periodic_returns.iter().map(|k| k.to_string()).collect();
    lines.push(
        JsonObject::new()
            .text("record", "end")
            .int("steps", f.records.len() as i64)
            .flag("positivity_lost", f.terminal_min_ricci.is_some())
            .opt("terminal_min_ricci", f.terminal_min_ricci)
            .raw("periodic_returns", &format!("[{}]", returns.join(",")))
            .finish(),
    );
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

/// Field file: `{"grid": {...}, "values": [...]}`.
pub fn field_json(backend: &Backend, f: &Field) -> String {
    let values: Vec<String> = f
        .values()
        .iter()
        .map(|v| number(*v).unwrap_or_else(|| "null".into()))
        .collect();
    format!(
        "{{\"grid\":{},\"values\":[{}]}}\n",
        grid_json(backend.tag()),
        values.join(",")
    )
}

/// Reads a field file written by [`field_json`] and checks it matches `backend`.
pub fn read_field(backend: &Backend, text: &str) -> Result<Field, String> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| format!("line {}, column {}: {e}", e.line(), e.column()))?;
    let grid = v.get("grid").ok_or("missing \"grid\"")?;
    let expected: Value = serde_json::from_str(&grid_json(backend.tag())).expect("grid json is valid");
    let same = match (grid.get("kind"), expected.get("kind")) {
        (Some(a), Some(b)) if a == b => ["n", "n1", "n2", "l1", "l2"].iter().all(|k| {
            match (grid.get(*k), expected.get(*k)) {
                (None, None) => true,
                (Some(a), Some(b)) => a.as_f64() == b.as_f64(),
                _ => false,
            }
        }),
        _ => false,
    };
    if !same {
        return Err(format!("field grid {grid} does not match the configured backend {}", backend.tag()));
    }
    let values = v
        .get("values")
        .and_then(Value::as_array)
        .ok_or("missing \"values\" array")?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| format!("non-numeric value {x}")))
        .collect::<Result<Vec<f64>, String>>()?;
    backend.from_values(values).map_err(|e| e.to_string())
}
