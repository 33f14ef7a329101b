use ricci_core::iteration::{DEFAULT_MAX_STEPS, DEFAULT_STOP_TOL};
use ricci_core::{GridTag, ModeId};
use ricci_iter::config::{parse_config, ConfigError, DataSpec};
use std::path::Path;

fn parse(text: &str) -> Result<ricci_iter::config::RunConfig, ConfigError> {
    parse_config(text, Path::new("/tmp"))
}

fn violations(text: &str) -> Vec<String> {
    match parse(text) {
        Err(ConfigError::Invalid(v)) => v,
        other => panic!("expected a rejection, got {other:?}"),
    }
}

#[test]
fn minimal_sphere_gets_defaults() {
    let cfg = parse(r#"{"backend": {"kind": "sphere"}}"#).unwrap();
    assert_eq!(cfg.backend.tag(), GridTag::Sphere { n: 256 });
    assert_eq!(cfg.iteration.mu, 1);
    assert_eq!(cfg.iteration.max_steps, DEFAULT_MAX_STEPS);
    assert_eq!(cfg.iteration.stop_tol_sup, DEFAULT_STOP_TOL);
    assert_eq!(cfg.initial_spec, DataSpec::Zero);
    assert!(cfg.iteration.initial_psi.values().iter().all(|&x| x == 0.0));
    assert!(cfg.output.csv && cfg.output.jsonl && cfg.output.svg && cfg.output.states);
    assert!(!cfg.oracle_mode);
}

#[test]
fn torus_defaults_to_flat_class() {
    let cfg = parse(r#"{"backend": {"kind": "torus", "resolution": [32, 16]}}"#).unwrap();
    assert_eq!(cfg.iteration.mu, 0);
    match cfg.backend.tag() {
        GridTag::Torus { n1, n2, .. } => assert_eq!((n1, n2), (32, 16)),
        t => panic!("unexpected grid {t}"),
    }
}

#[test]
fn synthetic_f_implies_model_sign() {
    let cfg = parse(
        r#"{"backend": {"kind": "torus", "resolution": 32},
            "synthetic_f": {"modes": {"cos:1:0": 0.2}}}"#,
    )
    .unwrap();
    assert_eq!(cfg.iteration.mu, -1);
    assert!(cfg.iteration.synthetic_f.is_some());
}

#[test]
fn mode_ids_are_parsed() {
    let cfg = parse(
        r#"{"backend": {"kind": "sphere", "resolution": 64},
            "initial": {"modes": {"P2": 0.3, "P3": -0.1}}}"#,
    )
    .unwrap();
    assert_eq!(
        cfg.initial_spec,
        DataSpec::Modes(vec![(ModeId::Legendre(2), 0.3), (ModeId::Legendre(3), -0.1)])
    );
}

#[test]
fn negative_sign_on_sphere_is_inadmissible() {
    let v = violations(r#"{"backend": {"kind": "sphere", "resolution": 64}, "mu": -1}"#);
    assert!(v.iter().any(|m| m.contains("inadmissible class sign")), "{v:?}");
}

#[test]
fn large_torus_amplitude_reports_margin() {
    let v = violations(
        r#"{"backend": {"kind": "torus", "resolution": 32},
            "initial": {"random": {"band": 4, "amplitude": 1.5, "seed": 3}}}"#,
    );
    assert!(v.iter().any(|m| m.contains("positivity margin")), "{v:?}");
}

#[test]
fn every_violation_is_reported() {
    let v = violations(
        r#"{"backend": {"kind": "sphere", "resolution": 64, "colour": 1},
            "max_steps": -3, "stop_tol_sup": -1.0, "gauge": true,
            "solver": {"linear": "magic"}}"#,
    );
    assert!(v.iter().any(|m| m.contains("\"backend.colour\"")), "{v:?}");
    assert!(v.iter().any(|m| m.contains("\"gauge\"")), "{v:?}");
    assert!(v.iter().any(|m| m.contains("max_steps")), "{v:?}");
    assert!(v.iter().any(|m| m.contains("solver.linear")), "{v:?}");
    assert!(v.len() >= 4);
}

#[test]
fn syntax_errors_carry_position() {
    match parse("{\n  \"backend\": {\"kind\": \"sphere\",}\n}") {
        Err(ConfigError::Syntax { line, column, .. }) => {
            assert_eq!(line, 2);
            assert!(column > 1);
        }
        other => panic!("expected a syntax error, got {other:?}"),
    }
}

#[test]
fn oracle_mode_limits_resolution() {
    let v = violations(r#"{"backend": {"kind": "sphere", "resolution": 128}, "oracle_mode": true}"#);
    assert!(v.iter().any(|m| m.contains("oracle_mode")), "{v:?}");
    assert!(parse(r#"{"backend": {"kind": "sphere", "resolution": 32}, "oracle_mode": true}"#).is_ok());
}

#[test]
fn file_paths_resolve_against_the_config_directory() {
    let cfg = parse(r#"{"backend": {"kind": "sphere", "resolution": 32}, "target_file": "h.json"}"#).unwrap();
    assert_eq!(cfg.target_file.as_deref(), Some(Path::new("/tmp/h.json")));
}

#[test]
fn bundled_configs_parse() {
    for text in [
        ricci_iter::checks::FIXED_SPHERE,
        ricci_iter::checks::FIXED_TORUS,
        ricci_iter::checks::SPHERE_CONVERGENCE,
        ricci_iter::checks::TORUS_MODEL,
        ricci_iter::checks::FORWARD_P2,
    ] {
        parse(text).unwrap();
    }
}
