use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ricci-iter"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(sub: &str, config: &Path, out: &Path) -> Output {
    bin()
        .args([sub, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn records(jsonl: &str) -> Vec<serde_json::Value> {
    jsonl.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn round_start_stops_after_one_step() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"backend": {"kind": "sphere", "resolution": 64}}"#);
    let out = tmp.path().join("out");
    let o = run("iterate", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let recs = records(&fs::read_to_string(out.join("trajectory.jsonl")).unwrap());
    let steps: Vec<_> = recs.iter().filter(|r| r["record"] == "step").collect();
    assert_eq!(steps.len(), 1);
    assert_eq!(steps[0]["c0_increment"].as_f64().unwrap(), 0.0);
    let end = recs.last().unwrap();
    assert_eq!(end["record"], "end");
    assert_eq!(end["converged"], true);
    for name in ["summary.csv", "convergence.svg", "final_state.json"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
}

#[test]
fn rejected_config_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"backend": {"kind": "sphere", "resolution": 64}, "mu": -1}"#,
    );
    let out = tmp.path().join("out");
    let o = run("iterate", &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("inadmissible class sign"));
    assert!(!out.exists());

    let bad = write_config(tmp.path(), "bad.json", "{ not json");
    assert_eq!(run("iterate", &bad, &out).status.code(), Some(2));
    assert_eq!(run("iterate", &tmp.path().join("missing.json"), &out).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn invalid_thread_count_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let o = bin()
        .env("RICCI_ITER_THREADS", "zero")
        .args(["iterate", "--config"])
        .arg(configs().join("fixed_sphere.json"))
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("torus_model.json");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run("iterate", &cfg, &a).status.code(), Some(0));
    let o = bin()
        .env("RICCI_ITER_THREADS", "1")
        .args(["iterate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    for name in ["trajectory.jsonl", "summary.csv", "convergence.svg", "final_state.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

fn parse_cell(s: &str) -> Option<f64> {
    (!s.is_empty()).then(|| s.parse().unwrap())
}

#[test]
fn csv_and_jsonl_agree() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run("iterate", &configs().join("sphere_convergence.json"), &out).status.code(), Some(0));
    let recs = records(&fs::read_to_string(out.join("trajectory.jsonl")).unwrap());
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let steps: Vec<_> = recs.iter().filter(|r| r["record"] == "step").collect();
    assert!(steps.len() > 5);
    for step in steps {
        let k = step["k"].as_u64().unwrap() as usize;
        let row = rows.iter().find(|r| r[0] == k.to_string()).unwrap();
        for (col, name) in header.iter().enumerate().skip(1) {
            let json = step.get(*name).and_then(|v| v.as_f64());
            assert_eq!(parse_cell(row[col]), json, "k = {k}, column {name}");
        }
    }
}

#[test]
fn summary_matches_golden() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run("iterate", &configs().join("sphere_convergence.json"), &out).status.code(), Some(0));
    let got = fs::read_to_string(out.join("summary.csv")).unwrap();
    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/sphere_convergence_summary.csv");
    let want = fs::read_to_string(golden_path).unwrap();
    let (got, want): (Vec<&str>, Vec<&str>) = (got.lines().collect(), want.lines().collect());
    assert_eq!(got.len(), want.len());
    assert_eq!(got[0], want[0]);
    for (g, w) in got.iter().zip(&want).skip(1) {
        for (a, b) in g.split(',').zip(w.split(',')) {
            match (parse_cell(a), parse_cell(b)) {
                (Some(x), Some(y)) => {
                    let tol = 1e-9 * y.abs().max(1e-3);
                    assert!((x - y).abs() <= tol, "{g}\nvs\n{w}");
                }
                (x, y) => assert_eq!(x, y),
            }
        }
    }
}

#[test]
fn oracle_mode_records_first_step_agreement() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"backend": {"kind": "torus", "resolution": 16},
            "synthetic_f": {"modes": {"cos:1:0": 0.2}}, "oracle_mode": true, "max_steps": 3}"#,
    );
    let out = tmp.path().join("out");
    let o = run("iterate", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let recs = records(&fs::read_to_string(out.join("trajectory.jsonl")).unwrap());
    let oracle = recs.iter().find(|r| r["record"] == "oracle").unwrap();
    assert!(oracle["first_step_deviation"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn forward_run_loses_positivity() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run("fwd", &configs().join("forward_p2.json"), &out);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("positivity lost"));
    let csv = fs::read_to_string(out.join("forward.csv")).unwrap();
    assert!(csv.lines().count() > 3);

    let torus = run("fwd", &configs().join("fixed_torus.json"), &tmp.path().join("t"));
    assert_eq!(torus.status.code(), Some(2));
    assert!(!tmp.path().join("t").exists());
}

#[test]
fn inverse_ricci_then_green() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let b = ricci_core::Backend::sphere(64).unwrap();
    let h = b.mode(ricci_core::ModeId::Legendre(2)).unwrap().map(|p| 1.0 + 0.2 * p);
    fs::write(dir.join("h.json"), ricci_iter::output::field_json(&b, &h)).unwrap();
    let inv_cfg = write_config(
        dir,
        "inv.json",
        r#"{"backend": {"kind": "sphere", "resolution": 64}, "target_file": "h.json"}"#,
    );
    let o = run("invricci", &inv_cfg, &dir.join("inv"));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("inv/inverse_ricci.json")).unwrap()).unwrap();
    assert!(report["ricci_deviation"].as_f64().unwrap() < 1e-9);

    fs::copy(dir.join("inv/inverse_ricci_state.json"), dir.join("state.json")).unwrap();
    let green_cfg = write_config(
        dir,
        "green.json",
        r#"{"backend": {"kind": "sphere", "resolution": 64}, "state_file": "state.json"}"#,
    );
    let o = run("green", &green_cfg, &dir.join("green"));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let g: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("green/green.json")).unwrap()).unwrap();
    assert!(g["slack"].as_f64().unwrap() >= -1e-6);
    assert!(g["a"].as_f64().unwrap() > 0.0);
}

#[test]
fn inverse_ricci_rejects_wrong_class() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let b = ricci_core::Backend::sphere(32).unwrap();
    fs::write(dir.join("h.json"), ricci_iter::output::field_json(&b, &b.constant(2.0))).unwrap();
    let cfg = write_config(
        dir,
        "inv.json",
        r#"{"backend": {"kind": "sphere", "resolution": 32}, "target_file": "h.json"}"#,
    );
    let o = run("invricci", &cfg, &dir.join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.join("out").exists());
}

#[test]
fn grid_mismatch_in_state_file_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let b = ricci_core::Backend::sphere(32).unwrap();
    fs::write(dir.join("s.json"), ricci_iter::output::field_json(&b, &b.zeros())).unwrap();
    let cfg = write_config(
        dir,
        "g.json",
        r#"{"backend": {"kind": "sphere", "resolution": 64}, "state_file": "s.json"}"#,
    );
    assert_eq!(run("green", &cfg, &dir.join("out")).status.code(), Some(2));
}
