#![allow(dead_code)]

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ptransport"))
}

/// Fresh scratch directory under the target dir.
pub fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

pub fn write_config(dir: &PathBuf, name: &str, config: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(config).unwrap()).unwrap();
    p
}

pub fn run(config: &PathBuf, extra: &[&str]) -> Output {
    bin().arg("run").arg(config).args(extra).env_remove("PATH_TRANSPORT_THREADS").output().unwrap()
}

pub fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("bad report ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

/// The built-in geometries written out as expression tables, `coefficients[i][j][a]`.
pub fn expression_twin(name: &str) -> Value {
    match name {
        "euclidean-cartesian" => json!({
            "name": "cartesian-expr", "n": 2, "m": 2,
            "coefficients": [[["0", "0"], ["0", "0"]], [["0", "0"], ["0", "0"]]],
            "metric": [["1", "0"], ["0", "1"]],
        }),
        "euclidean-polar" => json!({
            "name": "polar-expr", "n": 2, "m": 2,
            "coefficients": [[["0", "0"], ["0", "-x1"]], [["0", "1/x1"], ["1/x1", "0"]]],
            "metric": [["1", "0"], ["0", "x1^2"]],
            "region": {"lo": [0.5, 0], "hi": [2, "pi"]},
            "periods": [null, "2pi"],
        }),
        "sphere" => json!({
            "name": "sphere-expr", "n": 2, "m": 2,
            "coefficients": [
                [["0", "0"], ["0", "-sin(x1)*cos(x1)"]],
                [["0", "cos(x1)/sin(x1)"], ["cos(x1)/sin(x1)", "0"]],
            ],
            "metric": [["1", "0"], ["0", "sin(x1)^2"]],
            "region": {"lo": [0.3, 0], "hi": ["pi - 0.3", "2pi"]},
            "periods": [null, "2pi"],
        }),
        "torsion-constant" => json!({
            "name": "torsion-expr", "n": 2, "m": 2,
            "coefficients": [[["0", "1"], ["0", "0"]], [["0", "0"], ["0", "0"]]],
            "metric": [["1", "0"], ["0", "1"]],
        }),
        "gauge-rotation" => json!({
            "name": "gauge-expr", "n": 2, "m": 2,
            "coefficients": [[["0", "0"], ["1", "0"]], [["-1", "0"], ["0", "0"]]],
            "metric": [["1", "0"], ["0", "1"]],
        }),
        other => panic!("no expression twin for {other}"),
    }
}

/// Every numeric leaf of `summary` and `records`, keyed by its JSON path.
pub fn numeric_fields(report: &Value) -> Vec<(String, f64)> {
    fn walk(v: &Value, path: String, out: &mut Vec<(String, f64)>) {
        match v {
            Value::Number(n) => out.push((path, n.as_f64().unwrap())),
            Value::Object(m) => m.iter().for_each(|(k, x)| walk(x, format!("{path}.{k}"), out)),
            Value::Array(a) => a.iter().enumerate().for_each(|(i, x)| walk(x, format!("{path}[{i}]"), out)),
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(&report["summary"], "summary".into(), &mut out);
    walk(&report["records"], "records".into(), &mut out);
    out
}

/// Largest difference over the numeric fields of two reports; panics if the
/// field sets differ.
pub fn max_field_gap(a: &Value, b: &Value) -> f64 {
    let (fa, fb) = (numeric_fields(a), numeric_fields(b));
    let ka: Vec<&String> = fa.iter().map(|f| &f.0).collect();
    let kb: Vec<&String> = fb.iter().map(|f| &f.0).collect();
    assert_eq!(ka, kb, "reports carry different fields");
    assert!(!fa.is_empty(), "no numeric fields");
    fa.iter().zip(&fb).map(|(x, y)| (x.1 - y.1).abs()).fold(0.0, f64::max)
}

/// One scenario per task, each runnable on every built-in geometry.
pub fn scenario_suite(geometry: Value) -> Vec<(&'static str, Value)> {
    let region_path = |g: &Value| -> (String, String) {
        // A small loop-free curve inside each geometry's region.
        let name = g.as_str().unwrap_or_else(|| g["name"].as_str().unwrap());
        if name.contains("sphere") {
            ("1.0 + 0.3*sin(s)".into(), "1.0 + s".into())
        } else if name.contains("polar") {
            ("1.0 + 0.3*sin(s)".into(), "0.5 + 0.8*s".into())
        } else {
            ("0.4*sin(s)".into(), "0.3*cos(2*s)".into())
        }
    };
    let (x, y) = region_path(&geometry);
    vec![
        ("transport", json!({
            "geometry": geometry.clone(), "task": "transport",
            "params": {"path": {"coords": [x, y], "domain": [0, 2]}, "vector": [1, 0.5]},
        })),
        ("derivation", json!({
            "geometry": geometry.clone(), "task": "derivation",
            "params": {"path": {"coords": [x, y], "domain": [0, 2]}, "section": ["cos(s)", "1 + s^2"], "at": 1.0},
        })),
        ("torsion", json!({
            "geometry": geometry.clone(), "task": "torsion",
            "params": {
                "map": {"coords": [format!("({x})*(1 + 0.1*t)"), format!("{y} + 0.2*t")], "s_domain": [0, 2], "t_domain": [0, 1]},
                "samples": [[0.5, 0.5], [1.5, 0.25]],
            },
        })),
        ("curvature", json!({
            "geometry": geometry.clone(), "task": "curvature",
            "params": {
                "map": {"coords": [format!("({x})*(1 + 0.1*t)"), format!("{y} + 0.2*t")], "s_domain": [0, 2], "t_domain": [0, 1]},
                "samples": [[0.5, 0.5], [1.5, 0.25]],
            },
        })),
        ("verify-props", json!({
            "geometry": geometry, "task": "verify-props", "seed": 7,
            "params": {"paths": 2, "triples": 3, "samples": 2},
        })),
    ]
}
