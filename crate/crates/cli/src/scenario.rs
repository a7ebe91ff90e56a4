//! Scenario configuration: JSON schema types, validation, and resolution into
//! engine objects.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;
use transport_core::error::Error as EngineError;
use transport_core::geometries::{self, Region};
use transport_core::path::ChartSpec;
use transport_core::{ConnectionField, Integrator, Interval, Path, SectionAlongPath, TwoParamMap};

use crate::expr::{parse_expression, BindError, Compiled, SyntaxError};

/// Anything wrong with the scenario itself (exit status 2).
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{field}: {source}")]
    Syntax { field: String, source: SyntaxError },
    #[error("{field}: {source}")]
    Bind { field: String, source: BindError },
}

impl ConfigError {
    pub fn kind(&self) -> &'static str {
        match self {
            ConfigError::Json(_) => "json",
            ConfigError::Schema { .. } => "schema",
            ConfigError::Syntax { .. } => "expression-syntax",
            ConfigError::Bind { .. } => "expression-variable",
        }
    }

    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Schema { path: path.into(), message: message.into() }
    }
}

type CResult<T> = std::result::Result<T, ConfigError>;

/// A real number written either as a JSON number or as a string: `"pi"`,
/// `"2pi"`, `"-pi"`, `"-2pi"`, or any constant expression such as `"pi/3"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Number(pub f64);

impl<'de> Deserialize<'de> for Number {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            F(f64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::F(v) => Ok(Number(v)),
            Raw::S(s) => parse_number(&s).map(Number).map_err(serde::de::Error::custom),
        }
    }
}

fn parse_number(s: &str) -> std::result::Result<f64, String> {
    match s.trim() {
        "pi" => return Ok(PI),
        "2pi" => return Ok(2.0 * PI),
        "-pi" => return Ok(-PI),
        "-2pi" => return Ok(-2.0 * PI),
        _ => {}
    }
    let e = parse_expression(s).map_err(|e| format!("'{s}' is not a number: {e}"))?;
    if !e.is_constant() {
        return Err(format!("'{s}' must not contain variables"));
    }
    e.eval(&[]).map_err(|e| format!("'{s}': {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Transport,
    Derivation,
    Torsion,
    Curvature,
    CertifyFlat,
    BuildFrame,
    Holonomy,
    VerifyProps,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Transport => "transport",
            TaskKind::Derivation => "derivation",
            TaskKind::Torsion => "torsion",
            TaskKind::Curvature => "curvature",
            TaskKind::CertifyFlat => "certify-flat",
            TaskKind::BuildFrame => "build-frame",
            TaskKind::Holonomy => "holonomy",
            TaskKind::VerifyProps => "verify-props",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(format!("unknown format '{s}' (expected json or csv)")),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub format: Format,
    pub path: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
enum IntegratorSpec {
    Adaptive {
        #[serde(default = "default_rtol")]
        rtol: f64,
        #[serde(default = "default_atol")]
        atol: f64,
    },
    Fixed {
        h: f64,
    },
}

fn default_rtol() -> f64 {
    1e-9
}

fn default_atol() -> f64 {
    1e-12
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    geometry: Value,
    task: TaskKind,
    #[serde(default)]
    params: Option<Value>,
    #[serde(default)]
    integrator: Option<IntegratorSpec>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    output: OutputSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BuiltinSpec {
    builtin: String,
    /// Coefficient of the `torsion-constant` geometry.
    c: Option<Number>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpressionGeometrySpec {
    name: Option<String>,
    n: usize,
    m: usize,
    /// `coefficients[i][j][a]` is `Γ^i_{.ja}` as an expression in `x1…xn`.
    coefficients: Vec<Vec<Vec<String>>>,
    metric: Option<Vec<Vec<String>>>,
    region: Option<RegionSpec>,
    periods: Option<Vec<Option<Number>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub lo: Vec<Number>,
    pub hi: Vec<Number>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    /// One expression in `s` per base coordinate.
    pub coords: Vec<String>,
    pub domain: [Number; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    /// One expression in `s, t` per base coordinate.
    pub coords: Vec<String>,
    pub s_domain: [Number; 2],
    pub t_domain: [Number; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransportParams {
    path: PathSpec,
    from: Option<Number>,
    to: Option<Number>,
    vector: Option<Vec<Number>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DerivationParams {
    path: PathSpec,
    /// One expression in `s` per fiber component.
    section: Vec<String>,
    at: Number,
    eps: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapParams {
    map: MapSpec,
    samples: Vec<[Number; 2]>,
    h: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertifyParams {
    region: Option<RegionSpec>,
    resolution: Vec<usize>,
    threshold: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct BuildFrameParams {
    region: Option<RegionSpec>,
    resolution: Vec<usize>,
    basepoint: Vec<Number>,
    /// 1-based axis order for the sweep.
    axis_order: Option<Vec<usize>>,
    threshold: Option<f64>,
    test_paths: Option<usize>,
    samples_per_path: Option<usize>,
    #[serde(default)]
    probes: Vec<Vec<Number>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct HolonomyParams {
    path: PathSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyParams {
    region: Option<RegionSpec>,
    paths: Option<usize>,
    triples: Option<usize>,
    samples: Option<usize>,
}

/// Metric used to measure rotation angles.
pub type MetricEval = Arc<dyn Fn(&DVector<f64>) -> transport_core::error::Result<DMatrix<f64>> + Send + Sync>;

/// A geometry ready for the engine.
#[derive(Clone)]
pub struct ResolvedGeometry {
    pub label: String,
    pub connection: ConnectionField,
    pub metric: Option<MetricEval>,
    pub region: Region,
    pub periods: Vec<Option<f64>>,
}

impl fmt::Debug for ResolvedGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ResolvedGeometry").field("label", &self.label).field("region", &self.region).finish()
    }
}

impl ResolvedGeometry {
    pub fn base_dim(&self) -> usize {
        self.connection.chart().base_dim
    }

    pub fn fiber_dim(&self) -> usize {
        self.connection.chart().fiber_dim
    }
}

/// Task with its resolved inputs.
#[derive(Debug, Clone)]
pub enum Task {
    Transport { path: Path, from: f64, to: f64, vector: Option<DVector<f64>> },
    Derivation { path: Path, section: SectionAlongPath, at: f64, eps: Vec<f64> },
    Torsion { map: TwoParamMap, samples: Vec<(f64, f64)> },
    Curvature { map: TwoParamMap, samples: Vec<(f64, f64)>, h: Option<f64> },
    CertifyFlat { region: Region, resolution: Vec<usize>, threshold: Option<f64> },
    BuildFrame {
        region: Region,
        resolution: Vec<usize>,
        basepoint: DVector<f64>,
        axis_order: Option<Vec<usize>>,
        threshold: Option<f64>,
        test_paths: usize,
        samples_per_path: usize,
        probes: Vec<DVector<f64>>,
    },
    Holonomy { path: Path },
    VerifyProps { region: Region, paths: usize, triples: usize, samples: usize },
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Effective configuration after command-line overrides.
    pub config: Value,
    pub hash: String,
    pub kind: TaskKind,
    pub geometry: ResolvedGeometry,
    pub task: Task,
    pub integrator: Integrator,
    pub seed: u64,
    pub output: OutputSpec,
}

/// Command-line settings that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub fixed_step: Option<f64>,
    pub format: Option<Format>,
    pub output: Option<String>,
}

impl Overrides {
    fn apply(&self, v: &mut Value) {
        let Some(obj) = v.as_object_mut() else { return };
        if let Some(seed) = self.seed {
            obj.insert("seed".into(), seed.into());
        }
        if let Some(h) = self.fixed_step {
            obj.insert("integrator".into(), serde_json::json!({ "method": "fixed", "h": h }));
        }
        if self.format.is_some() || self.output.is_some() {
            let out = obj.entry("output").or_insert_with(|| Value::Object(Default::default()));
            if let Some(o) = out.as_object_mut() {
                if let Some(f) = self.format {
                    let name = match f {
                        Format::Json => "json",
                        Format::Csv => "csv",
                    };
                    o.insert("format".into(), name.into());
                }
                if let Some(p) = &self.output {
                    o.insert("path".into(), p.clone().into());
                }
            }
        }
    }
}

/// SHA-256 of the canonical (sorted-key, compact) configuration without its
/// `output` block, as lowercase hex.
pub fn config_hash(config: &Value) -> String {
    let mut v = config.clone();
    if let Some(o) = v.as_object_mut() {
        o.remove("output");
    }
    let canonical = serde_json::to_string(&v).expect("JSON values always serialize");
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn from_value<T: DeserializeOwned>(v: Value, root: &str) -> CResult<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let p = e.path().to_string();
        let path = if p == "." { root.to_string() } else { format!("{root}.{p}") };
        ConfigError::schema(path, e.into_inner().to_string())
    })
}

fn compile(src: &str, vars: &[&str], field: &str) -> CResult<Compiled> {
    let e = parse_expression(src).map_err(|source| ConfigError::Syntax { field: field.into(), source })?;
    e.bind(vars).map_err(|source| ConfigError::Bind { field: field.into(), source })
}

fn eval_err(field: &str) -> impl Fn(crate::expr::EvalError) -> EngineError + '_ {
    move |e| EngineError::eval(format!("{field}: {e}"))
}

fn positive(v: f64, path: &str) -> CResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::schema(path, format!("must be a positive finite number, got {v}")))
    }
}

fn interval(d: &[Number; 2], path: &str) -> CResult<Interval> {
    Interval::new(d[0].0, d[1].0).map_err(|e| ConfigError::schema(path, e.to_string()))
}

fn coordinate_names(n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("x{k}")).collect()
}

fn expression_geometry(spec: ExpressionGeometrySpec) -> CResult<ResolvedGeometry> {
    let (n, m) = (spec.n, spec.m);
    if n == 0 || m == 0 {
        return Err(ConfigError::schema("geometry", "n and m must be positive"));
    }
    let names = coordinate_names(n);
    let vars: Vec<&str> = names.iter().map(String::as_str).collect();
    if spec.coefficients.len() != m {
        return Err(ConfigError::schema("geometry.coefficients", format!("expected {m} rows (index i), got {}", spec.coefficients.len())));
    }
    // table[a][i][j]
    let mut table: Vec<Vec<Vec<Compiled>>> = vec![Vec::with_capacity(m); n];
    for a in 0..n {
        for i in 0..m {
            let mut row = Vec::with_capacity(m);
            for j in 0..m {
                let field = format!("geometry.coefficients[{i}][{j}][{a}]");
                let cell = spec
                    .coefficients
                    .get(i)
                    .and_then(|r| r.get(j))
                    .ok_or_else(|| ConfigError::schema(format!("geometry.coefficients[{i}]"), format!("expected {m} entries (index j)")))?;
                if cell.len() != n {
                    return Err(ConfigError::schema(
                        format!("geometry.coefficients[{i}][{j}]"),
                        format!("expected {n} expressions (index a), got {}", cell.len()),
                    ));
                }
                row.push(compile(&cell[a], &vars, &field)?);
            }
            table[a].push(row);
        }
    }
    for (i, r) in spec.coefficients.iter().enumerate() {
        if r.len() != m {
            return Err(ConfigError::schema(format!("geometry.coefficients[{i}]"), format!("expected {m} entries (index j), got {}", r.len())));
        }
    }
    // partials[b][a][i][j] = ∂_b Γ^i_{.ja}
    let partials: Vec<Vec<Vec<Vec<Compiled>>>> = (0..n)
        .map(|b| table.iter().map(|ta| ta.iter().map(|row| row.iter().map(|c| c.derivative(b)).collect()).collect()).collect())
        .collect();
    let chart = ChartSpec::new(n, m).map_err(|e| ConfigError::schema("geometry", e.to_string()))?;
    let table = Arc::new(table);
    let partials = Arc::new(partials);
    let eval_table = move |t: &Vec<Vec<Vec<Compiled>>>, x: &DVector<f64>| -> transport_core::error::Result<Vec<DMatrix<f64>>> {
        let args = x.as_slice();
        t.iter()
            .map(|ta| {
                let mut out = DMatrix::zeros(m, m);
                for (i, row) in ta.iter().enumerate() {
                    for (j, c) in row.iter().enumerate() {
                        out[(i, j)] = c.eval(args).map_err(eval_err("coefficient"))?;
                    }
                }
                Ok(out)
            })
            .collect()
    };
    let (t1, p1) = (table.clone(), partials.clone());
    let connection = ConnectionField::try_new(chart, move |x| eval_table(&t1, x))
        .try_with_partials(move |x| p1.iter().map(|pb| eval_table(pb, x)).collect());

    let metric = match spec.metric {
        None => None,
        Some(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(ConfigError::schema("geometry.metric", format!("expected an {n}x{n} table")));
            }
            let mut cells = Vec::with_capacity(n * n);
            for (i, r) in rows.iter().enumerate() {
                for (j, src) in r.iter().enumerate() {
                    cells.push(compile(src, &vars, &format!("geometry.metric[{i}][{j}]"))?);
                }
            }
            let f: MetricEval = Arc::new(move |x| {
                let mut g = DMatrix::zeros(n, n);
                for (k, c) in cells.iter().enumerate() {
                    g[(k / n, k % n)] = c.eval(x.as_slice()).map_err(eval_err("metric"))?;
                }
                Ok(g)
            });
            Some(f)
        }
    };
    let region = match spec.region {
        Some(r) => region(&r, n, "geometry.region")?,
        None => Region::new(vec![-1.0; n], vec![1.0; n]),
    };
    let periods = match spec.periods {
        None => vec![None; n],
        Some(p) => {
            if p.len() != n {
                return Err(ConfigError::schema("geometry.periods", format!("expected {n} entries")));
            }
            p.into_iter()
                .enumerate()
                .map(|(k, v)| v.map(|x| positive(x.0, &format!("geometry.periods[{k}]"))).transpose())
                .collect::<CResult<Vec<_>>>()?
        }
    };
    Ok(ResolvedGeometry {
        label: spec.name.unwrap_or_else(|| "expression".into()),
        connection,
        metric,
        region,
        periods,
    })
}

fn builtin_geometry(name: &str, c: Option<f64>) -> CResult<ResolvedGeometry> {
    let g = geometries::builtin(name).ok_or_else(|| {
        ConfigError::schema("geometry", format!("unknown built-in geometry '{name}' (known: {})", geometries::BUILTIN_NAMES.join(", ")))
    })?;
    let connection = match (name, c) {
        ("torsion-constant", Some(c)) => geometries::torsion_constant(c),
        (_, Some(_)) => return Err(ConfigError::schema("geometry.c", format!("'{name}' takes no parameter c"))),
        _ => g.connection,
    };
    let metric = g.metric.map(|m| {
        let f: MetricEval = Arc::new(move |x| Ok(m(x)));
        f
    });
    Ok(ResolvedGeometry { label: name.into(), connection, metric, region: g.region, periods: g.periods })
}

fn resolve_geometry(v: Value) -> CResult<ResolvedGeometry> {
    match v {
        Value::String(name) => builtin_geometry(&name, None),
        Value::Object(ref o) if o.contains_key("builtin") => {
            let spec: BuiltinSpec = from_value(v, "geometry")?;
            builtin_geometry(&spec.builtin, spec.c.map(|c| c.0))
        }
        Value::Object(_) => expression_geometry(from_value(v, "geometry")?),
        _ => Err(ConfigError::schema("geometry", "expected a built-in name or a geometry object")),
    }
}

fn region(r: &RegionSpec, n: usize, path: &str) -> CResult<Region> {
    if r.lo.len() != n || r.hi.len() != n {
        return Err(ConfigError::schema(path, format!("lo and hi need {n} entries")));
    }
    for k in 0..n {
        if !(r.lo[k].0 < r.hi[k].0) {
            return Err(ConfigError::schema(path, format!("lo[{k}] must be below hi[{k}]")));
        }
    }
    Ok(Region::new(r.lo.iter().map(|x| x.0).collect(), r.hi.iter().map(|x| x.0).collect()))
}

fn point(v: &[Number], n: usize, path: &str) -> CResult<DVector<f64>> {
    if v.len() != n {
        return Err(ConfigError::schema(path, format!("expected {n} coordinates, got {}", v.len())));
    }
    Ok(DVector::from_iterator(n, v.iter().map(|x| x.0)))
}

fn compile_all(srcs: &[String], vars: &[&str], field: &str) -> CResult<Arc<Vec<Compiled>>> {
    Ok(Arc::new(
        srcs.iter().enumerate().map(|(k, s)| compile(s, vars, &format!("{field}[{k}]"))).collect::<CResult<Vec<_>>>()?,
    ))
}

fn derivatives(cs: &[Compiled], k: usize) -> Arc<Vec<Compiled>> {
    Arc::new(cs.iter().map(|c| c.derivative(k)).collect())
}

fn eval_vec(cs: &[Compiled], args: &[f64], what: &str) -> transport_core::error::Result<DVector<f64>> {
    let v = cs.iter().map(|c| c.eval(args)).collect::<std::result::Result<Vec<_>, _>>().map_err(eval_err(what))?;
    Ok(DVector::from_vec(v))
}

pub fn build_path(spec: &PathSpec, n: usize, field: &str) -> CResult<Path> {
    if spec.coords.len() != n {
        return Err(ConfigError::schema(format!("{field}.coords"), format!("expected {n} expressions, got {}", spec.coords.len())));
    }
    let domain = interval(&spec.domain, &format!("{field}.domain"))?;
    let xs = compile_all(&spec.coords, &["s"], &format!("{field}.coords"))?;
    let vs = derivatives(&xs, 0);
    Ok(Path::try_new(domain, move |s| eval_vec(&xs, &[s], "path")).try_with_velocity(move |s| eval_vec(&vs, &[s], "path velocity")))
}

pub fn build_map(spec: &MapSpec, n: usize, field: &str) -> CResult<TwoParamMap> {
    if spec.coords.len() != n {
        return Err(ConfigError::schema(format!("{field}.coords"), format!("expected {n} expressions, got {}", spec.coords.len())));
    }
    let sd = interval(&spec.s_domain, &format!("{field}.s_domain"))?;
    let td = interval(&spec.t_domain, &format!("{field}.t_domain"))?;
    let xs = compile_all(&spec.coords, &["s", "t"], &format!("{field}.coords"))?;
    let (ds, dt) = (derivatives(&xs, 0), derivatives(&xs, 1));
    Ok(TwoParamMap::try_new(sd, td, move |s, t| eval_vec(&xs, &[s, t], "map")).try_with_partials(
        move |s, t| eval_vec(&ds, &[s, t], "map s-derivative"),
        move |s, t| eval_vec(&dt, &[s, t], "map t-derivative"),
    ))
}

fn build_section(srcs: &[String], m: usize, domain: Interval) -> CResult<SectionAlongPath> {
    if srcs.len() != m {
        return Err(ConfigError::schema("params.section", format!("expected {m} expressions, got {}", srcs.len())));
    }
    let cs = compile_all(srcs, &["s"], "params.section")?;
    let ds = derivatives(&cs, 0);
    Ok(SectionAlongPath::try_new(domain, move |s| eval_vec(&cs, &[s], "section"))
        .try_with_derivative(move |s| eval_vec(&ds, &[s], "section derivative")))
}

fn samples(v: &[[Number; 2]]) -> CResult<Vec<(f64, f64)>> {
    if v.is_empty() {
        return Err(ConfigError::schema("params.samples", "at least one (s, t) sample is required"));
    }
    Ok(v.iter().map(|p| (p[0].0, p[1].0)).collect())
}

fn resolution(r: &[usize], n: usize) -> CResult<Vec<usize>> {
    if r.len() != n || r.iter().any(|&k| k < 2) {
        return Err(ConfigError::schema("params.resolution", format!("expected {n} node counts, each at least 2")));
    }
    Ok(r.to_vec())
}

fn resolve_task(kind: TaskKind, params: Value, g: &ResolvedGeometry) -> CResult<Task> {
    let (n, m) = (g.base_dim(), g.fiber_dim());
    let region_or = |r: &Option<RegionSpec>| match r {
        Some(r) => region(r, n, "params.region"),
        None => Ok(g.region.clone()),
    };
    Ok(match kind {
        TaskKind::Transport => {
            let p: TransportParams = from_value(params, "params")?;
            let path = build_path(&p.path, n, "params.path")?;
            let dom = path.domain();
            let vector = match &p.vector {
                Some(v) => Some(point(v, m, "params.vector")?),
                None => None,
            };
            Task::Transport {
                from: p.from.map_or(dom.lo, |x| x.0),
                to: p.to.map_or(dom.hi, |x| x.0),
                path,
                vector,
            }
        }
        TaskKind::Derivation => {
            let p: DerivationParams = from_value(params, "params")?;
            let path = build_path(&p.path, n, "params.path")?;
            let section = build_section(&p.section, m, path.domain())?;
            let eps = p.eps.unwrap_or_else(|| vec![1e-2, 1e-3, 1e-4]);
            for (k, e) in eps.iter().enumerate() {
                positive(*e, &format!("params.eps[{k}]"))?;
            }
            Task::Derivation { path, section, at: p.at.0, eps }
        }
        TaskKind::Torsion | TaskKind::Curvature => {
            let p: MapParams = from_value(params, "params")?;
            let map = build_map(&p.map, n, "params.map")?;
            let samples = samples(&p.samples)?;
            if let Some(h) = p.h {
                positive(h, "params.h")?;
            }
            if kind == TaskKind::Torsion {
                if p.h.is_some() {
                    return Err(ConfigError::schema("params.h", "torsion takes no difference step"));
                }
                Task::Torsion { map, samples }
            } else {
                Task::Curvature { map, samples, h: p.h }
            }
        }
        TaskKind::CertifyFlat => {
            let p: CertifyParams = from_value(params, "params")?;
            if let Some(t) = p.threshold {
                positive(t, "params.threshold")?;
            }
            Task::CertifyFlat { region: region_or(&p.region)?, resolution: resolution(&p.resolution, n)?, threshold: p.threshold }
        }
        TaskKind::BuildFrame => {
            let p: BuildFrameParams = from_value(params, "params")?;
            if let Some(t) = p.threshold {
                positive(t, "params.threshold")?;
            }
            let axis_order = match p.axis_order {
                None => None,
                Some(o) => {
                    let mut sorted = o.clone();
                    sorted.sort_unstable();
                    if sorted != (1..=n).collect::<Vec<_>>() {
                        return Err(ConfigError::schema("params.axis_order", format!("must be a permutation of 1..{n}")));
                    }
                    Some(o.into_iter().map(|a| a - 1).collect())
                }
            };
            let probes =
                p.probes.iter().enumerate().map(|(k, v)| point(v, n, &format!("params.probes[{k}]"))).collect::<CResult<Vec<_>>>()?;
            Task::BuildFrame {
                region: region_or(&p.region)?,
                resolution: resolution(&p.resolution, n)?,
                basepoint: point(&p.basepoint, n, "params.basepoint")?,
                axis_order,
                threshold: p.threshold,
                test_paths: p.test_paths.unwrap_or(20).max(1),
                samples_per_path: p.samples_per_path.unwrap_or(10).max(1),
                probes,
            }
        }
        TaskKind::Holonomy => {
            let p: HolonomyParams = from_value(params, "params")?;
            Task::Holonomy { path: build_path(&p.path, n, "params.path")? }
        }
        TaskKind::VerifyProps => {
            let p: VerifyParams = from_value(params, "params")?;
            Task::VerifyProps {
                region: region_or(&p.region)?,
                paths: p.paths.unwrap_or(10).max(1),
                triples: p.triples.unwrap_or(50).max(1),
                samples: p.samples.unwrap_or(9).max(1),
            }
        }
    })
}

impl Scenario {
    /// Parse, apply overrides, validate and resolve a scenario document.
    pub fn from_json(text: &str, overrides: &Overrides) -> CResult<Scenario> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
        if !value.is_object() {
            return Err(ConfigError::schema("(root)", "expected a JSON object"));
        }
        overrides.apply(&mut value);
        let raw: RawConfig = from_value(value.clone(), "(root)")?;
        let integrator = match raw.integrator {
            None => Integrator::default(),
            Some(IntegratorSpec::Adaptive { rtol, atol }) => {
                Integrator::adaptive(positive(rtol, "integrator.rtol")?, positive(atol, "integrator.atol")?)
            }
            Some(IntegratorSpec::Fixed { h }) => Integrator::fixed(positive(h, "integrator.h")?),
        };
        let geometry = resolve_geometry(raw.geometry)?;
        let params = raw.params.unwrap_or_else(|| Value::Object(Default::default()));
        let task = resolve_task(raw.task, params, &geometry)?;
        Ok(Scenario {
            hash: config_hash(&value),
            config: value,
            kind: raw.task,
            geometry,
            task,
            integrator,
            seed: raw.seed,
            output: raw.output,
        })
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.integrator, Integrator::FixedStep { .. })
    }
}
