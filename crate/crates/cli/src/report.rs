//! Report documents: labeled scalar results rendered as sorted-key JSON or
//! flattened CSV.
//!
//! Index labels are 1-based with the upper index first, e.g. `H[i=1][j=2]`
//! for `H^1_{.2}` and `R[i=1][j=2][a=1][b=2]` for `R^1_{.212}`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};

use crate::scenario::Format;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ENGINE: i32 = 3;

/// A flat map from labels to scalar JSON values.
pub type Fields = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub config_hash: String,
    pub geometry: String,
    pub task: String,
    pub summary: Fields,
    pub records: Vec<Fields>,
    pub error: Option<ErrorRecord>,
    /// Omitted when the run is meant to be reproducible byte for byte.
    pub wall_seconds: Option<f64>,
}

/// `name[i=1][j=2]` from 0-based indices.
pub fn label(name: &str, idx: &[(&str, usize)]) -> String {
    let mut s = name.to_string();
    for (k, v) in idx {
        s.push_str(&format!("[{k}={}]", v + 1));
    }
    s
}

/// JSON number, or `null` for non-finite values.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn put(f: &mut Fields, key: impl Into<String>, v: impl Into<Value>) {
    f.insert(key.into(), v.into());
}

pub fn put_num(f: &mut Fields, key: impl Into<String>, v: f64) {
    f.insert(key.into(), num(v));
}

pub fn put_vector(f: &mut Fields, name: &str, index: &str, v: &DVector<f64>) {
    for (k, x) in v.iter().enumerate() {
        put_num(f, label(name, &[(index, k)]), *x);
    }
}

pub fn put_matrix(f: &mut Fields, name: &str, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            put_num(f, label(name, &[("i", i), ("j", j)]), m[(i, j)]);
        }
    }
}

impl Report {
    pub fn new(config_hash: &str, geometry: &str, task: &str) -> Self {
        Report {
            config_hash: config_hash.into(),
            geometry: geometry.into(),
            task: task.into(),
            summary: Fields::new(),
            records: Vec::new(),
            error: None,
            wall_seconds: None,
        }
    }

    pub fn failed(mut self, kind: &str, message: String, exit_code: i32) -> Self {
        self.summary.clear();
        self.records.clear();
        self.error = Some(ErrorRecord { kind: kind.into(), message, exit_code });
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.error.as_ref().map_or(EXIT_OK, |e| e.exit_code)
    }

    pub fn to_value(&self) -> Value {
        let mut root = Map::new();
        root.insert("config_hash".into(), self.config_hash.clone().into());
        root.insert("geometry".into(), self.geometry.clone().into());
        root.insert("task".into(), self.task.clone().into());
        root.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        match &self.error {
            None => {
                root.insert("status".into(), "ok".into());
                root.insert("summary".into(), Value::Object(self.summary.clone().into_iter().collect()));
                root.insert(
                    "records".into(),
                    Value::Array(self.records.iter().map(|r| Value::Object(r.clone().into_iter().collect())).collect()),
                );
            }
            Some(e) => {
                root.insert("status".into(), "error".into());
                root.insert("error".into(), json!({ "kind": e.kind, "message": e.message, "exit_code": e.exit_code }));
            }
        }
        if let Some(t) = self.wall_seconds {
            root.insert("timing".into(), json!({ "wall_seconds": num(t) }));
        }
        Value::Object(root)
    }

    /// Pretty JSON with sorted keys and a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_value()).expect("report values serialize");
        s.push('\n');
        s
    }

    /// One row per record (or a single row without records); summary fields
    /// are repeated on every row.
    pub fn to_csv(&self) -> String {
        let mut head: Fields = Fields::new();
        put(&mut head, "config_hash", self.config_hash.clone());
        put(&mut head, "geometry", self.geometry.clone());
        put(&mut head, "task", self.task.clone());
        match &self.error {
            None => put(&mut head, "status", "ok"),
            Some(e) => {
                put(&mut head, "status", "error");
                put(&mut head, "error.kind", e.kind.clone());
                put(&mut head, "error.message", e.message.clone());
                put(&mut head, "error.exit_code", e.exit_code);
            }
        }
        if let Some(t) = self.wall_seconds {
            put_num(&mut head, "timing.wall_seconds", t);
        }
        for (k, v) in &self.summary {
            head.insert(k.clone(), v.clone());
        }
        let mut record_keys: Vec<String> = Vec::new();
        for r in &self.records {
            for k in r.keys() {
                if !head.contains_key(k) && !record_keys.contains(k) {
                    record_keys.push(k.clone());
                }
            }
        }
        record_keys.sort();
        let mut columns: Vec<String> = head.keys().cloned().collect();
        columns.extend(record_keys.iter().cloned());
        let mut out = String::new();
        out.push_str(&columns.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","));
        out.push('\n');
        let empty = Fields::new();
        let rows: Vec<&Fields> = if self.records.is_empty() { vec![&empty] } else { self.records.iter().collect() };
        for r in rows {
            let cells: Vec<String> =
                columns.iter().map(|c| head.get(c).or_else(|| r.get(c)).map(csv_value).unwrap_or_default()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_value(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => csv_field(s),
        other => csv_field(&other.to_string()),
    }
}
