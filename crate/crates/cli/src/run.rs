//! Task dispatch: executes a validated scenario and fills in a report.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transport_core::error::{Error, Result};
use transport_core::flat::random_test_paths;
use transport_core::geometries::Region;
use transport_core::linalg::{inf_norm, max_abs};
use transport_core::transport::{rotation_angle, LimitSequence};
use transport_core::{
    build_flat_frame, connection_functional, curvature_matrix, curvature_tensor,
    derivation_limit, flatness_certificate, holonomic_obstruction, loop_holonomy_periodic, torsion_tensor, torsion_vector,
    transport_matrix, CoefficientFunctional, FlatFrameOptions, FrameField, Grid, Integrator, Interval, Path,
    SectionAlongPath, TwoParamMap,
};

use crate::report::{label, put, put_matrix, put_num, put_vector, Fields, Report, EXIT_ENGINE};
use crate::scenario::{ResolvedGeometry, Scenario, Task};

/// Machine-readable name of an engine error.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Domain { .. } => "domain",
        Error::Evaluation(_) => "evaluation",
        Error::Shape { .. } => "shape",
        Error::Invertibility(_) => "invertibility",
        Error::Convergence { .. } => "convergence",
        Error::NotALoop { .. } => "not-a-loop",
        Error::TangentBundle { .. } => "tangent-bundle",
        Error::FlatnessViolation { .. } => "flatness-violation",
        Error::NotConnectionInduced => "not-connection-induced",
        Error::InvalidArgument(_) => "invalid-argument",
    }
}

/// Run the scenario. Engine failures produce a report with an error record
/// and exit code 3.
pub fn run_scenario(s: &Scenario) -> Report {
    let start = Instant::now();
    let mut report = Report::new(&s.hash, &s.geometry.label, s.kind.name());
    let outcome = execute(s, &mut report);
    let mut report = match outcome {
        Ok(()) => report,
        Err(e) => report.failed(error_kind(&e), e.to_string(), EXIT_ENGINE),
    };
    if !s.is_deterministic() {
        report.wall_seconds = Some(start.elapsed().as_secs_f64());
    }
    report
}

fn execute(s: &Scenario, r: &mut Report) -> Result<()> {
    let g = &s.geometry;
    let f = connection_functional(&g.connection);
    match &s.task {
        Task::Transport { path, from, to, vector } => {
            let h = transport_matrix(&f, path, *from, *to, s.integrator)?;
            let back = transport_matrix(&f, path, *to, *from, s.integrator)?;
            let m = h.dim();
            let residual = max_abs(&(&back.matrix * &h.matrix - DMatrix::identity(m, m)));
            put_num(&mut r.summary, "from", *from);
            put_num(&mut r.summary, "to", *to);
            put_matrix(&mut r.summary, "H", &h.matrix);
            put_num(&mut r.summary, "H.est_error", h.est_error);
            put_num(&mut r.summary, "residual", residual);
            if let Some(v) = vector {
                put_vector(&mut r.summary, "v_in", "i", v);
                put_vector(&mut r.summary, "v_out", "i", &(&h.matrix * v));
            }
        }
        Task::Derivation { path, section, at, eps } => {
            let lim = derivation_limit(&f, path, section, *at, eps, s.integrator)?;
            put_num(&mut r.summary, "at", *at);
            put_vector(&mut r.summary, "D_analytic", "i", &lim.analytic.components);
            put_vector(&mut r.summary, "D_limit", "i", &lim.value.components);
            put_num(&mut r.summary, "discrepancy", (&lim.value.components - &lim.analytic.components).amax());
            put(&mut r.summary, "converges_linearly", lim.converges_linearly);
            limit_records(r, "forward", &lim.forward);
            if let Some(b) = &lim.backward {
                limit_records(r, "backward", b);
            }
        }
        Task::Torsion { map, samples } => {
            let mut worst = 0.0f64;
            for &(ps, pt) in samples {
                let tv = torsion_vector(&f, map, ps, pt)?;
                let x = map.point(ps, pt)?;
                let tensor = torsion_tensor(&g.connection, &x)?;
                let contracted = tensor.contract(&map.tangent_s(ps, pt)?, &map.tangent_t(ps, pt)?)?;
                let mut rec = Fields::new();
                put_num(&mut rec, "s", ps);
                put_num(&mut rec, "t", pt);
                put_vector(&mut rec, "x", "a", &x);
                put_vector(&mut rec, "T", "i", &tv.components);
                for ((i, j, k), v) in tensor.values.indexed_iter() {
                    put_num(&mut rec, label("T", &[("i", i), ("j", j), ("k", k)]), *v);
                }
                put_num(&mut rec, "tensor_discrepancy", (contracted - &tv.components).amax());
                worst = worst.max(tv.components.amax());
                r.records.push(rec);
            }
            put_num(&mut r.summary, "max_abs_T", worst);
        }
        Task::Curvature { map, samples, h } => {
            let mut worst = 0.0f64;
            for &(ps, pt) in samples {
                let rm = curvature_matrix(&f, map, ps, pt, *h)?;
                let x = map.point(ps, pt)?;
                let tensor = curvature_tensor(&g.connection, &x, None)?;
                let contracted = tensor.contract(&map.tangent_s(ps, pt)?, &map.tangent_t(ps, pt)?)?;
                let d = max_abs(&(&rm.matrix - contracted));
                let mut rec = Fields::new();
                put_num(&mut rec, "s", ps);
                put_num(&mut rec, "t", pt);
                put_vector(&mut rec, "x", "a", &x);
                put_matrix(&mut rec, "R", &rm.matrix);
                put_num(&mut rec, "R.est_error", rm.est_error);
                put_num(&mut rec, "R.step", rm.step);
                for ((i, j, a, b), v) in tensor.values.indexed_iter() {
                    put_num(&mut rec, label("R", &[("i", i), ("j", j), ("a", a), ("b", b)]), *v);
                }
                put_num(&mut rec, "contraction_discrepancy", d);
                worst = worst.max(d);
                r.records.push(rec);
            }
            put_num(&mut r.summary, "max_contraction_discrepancy", worst);
        }
        Task::CertifyFlat { region, resolution, threshold } => {
            let grid = Grid::new(region.clone(), resolution.clone())?;
            let c = flatness_certificate(&g.connection, &grid, *threshold)?;
            put_num(&mut r.summary, "max_curvature_norm", c.max_curvature_norm);
            put_vector(&mut r.summary, "argmax", "a", &c.argmax);
            put_num(&mut r.summary, "threshold", c.threshold);
            put(&mut r.summary, "verdict", if c.is_flat() { "flat" } else { "not-flat" });
            put(&mut r.summary, "node_count", grid.node_count());
        }
        Task::BuildFrame { region, resolution, basepoint, axis_order, threshold, test_paths, samples_per_path, probes } => {
            let grid = Grid::new(region.clone(), resolution.clone())?;
            let options = FlatFrameOptions {
                threshold: *threshold,
                axis_order: axis_order.clone(),
                test_paths: *test_paths,
                samples_per_path: *samples_per_path,
                seed: s.seed,
                ..Default::default()
            };
            let res = build_flat_frame(&g.connection, basepoint, &grid, &options)?;
            put_num(&mut r.summary, "residual", res.residual);
            put(&mut r.summary, "verdict", if res.certificate.is_flat() { "flat" } else { "not-flat" });
            put_num(&mut r.summary, "max_curvature_norm", res.certificate.max_curvature_norm);
            put_num(&mut r.summary, "threshold", res.certificate.threshold);
            put(&mut r.summary, "node_count", grid.node_count());
            put_vector(&mut r.summary, "basepoint", "a", basepoint);
            let tangent = g.connection.chart().is_tangent();
            let mut worst_commutator = 0.0f64;
            for x in probes {
                let mut rec = Fields::new();
                put_vector(&mut rec, "x", "a", x);
                put_matrix(&mut rec, "A", &res.frame.at_point(x)?);
                if tangent {
                    let ob = holonomic_obstruction(&g.connection, &res.frame, x, 1e-5)?;
                    for ((i, j, k), v) in ob.commutators.indexed_iter() {
                        put_num(&mut rec, label("C", &[("i", i), ("j", j), ("k", k)]), *v);
                    }
                    put_num(&mut rec, "commutator_max_norm", ob.max_norm);
                    put_num(&mut rec, "torsion_max", ob.torsion_max);
                    worst_commutator = worst_commutator.max(ob.max_norm);
                }
                r.records.push(rec);
            }
            if tangent && !probes.is_empty() {
                put_num(&mut r.summary, "commutator_max_norm", worst_commutator);
            }
        }
        Task::Holonomy { path } => {
            let h = loop_holonomy_periodic(&f, path, &g.periods, s.integrator)?;
            put_matrix(&mut r.summary, "H", &h.matrix);
            put_num(&mut r.summary, "H.est_error", h.est_error);
            let m = h.dim();
            put_num(&mut r.summary, "deviation_from_identity", max_abs(&(&h.matrix - DMatrix::identity(m, m))));
            if let (Some(metric), true) = (&g.metric, m == 2 && g.connection.chart().is_tangent()) {
                let x0 = path.point(path.domain().lo)?;
                let angle = rotation_angle(&h, &metric(&x0)?)?;
                put_num(&mut r.summary, "rotation_angle", angle);
            }
        }
        Task::VerifyProps { region, paths, triples, samples } => {
            verify_props(s, g, &f, region, *paths, *triples, *samples, r)?;
        }
    }
    Ok(())
}

fn limit_records(r: &mut Report, direction: &str, seq: &LimitSequence) {
    for (k, eps) in seq.eps.iter().enumerate() {
        let mut rec = Fields::new();
        put(&mut rec, "direction", direction);
        put_num(&mut rec, "eps", *eps);
        put_vector(&mut rec, "Q", "i", &seq.quotients[k]);
        put_num(&mut rec, "error", seq.errors[k]);
        put_num(&mut rec, "fitted_order", seq.fitted_order.unwrap_or(f64::NAN));
        r.records.push(rec);
    }
}

/// Smooth map `x_k(s,t) = c_k + a_k sin(u_k s + w_k t + φ_k)` on `[0,1]²`
/// inside `region`.
pub fn random_map(region: &Region, rng: &mut ChaCha8Rng) -> TwoParamMap {
    let n = region.dim();
    let params: Vec<[f64; 5]> = (0..n)
        .map(|k| {
            let half = 0.5 * (region.hi[k] - region.lo[k]);
            let amp = rng.random_range(0.1..0.4) * half;
            let centre = region.lo[k] + half + rng.random_range(-0.5..0.5) * (half - amp);
            [centre, amp, rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..std::f64::consts::TAU)]
        })
        .collect();
    let (p1, p2, p3) = (params.clone(), params.clone(), params);
    let d = Interval { lo: 0.0, hi: 1.0 };
    TwoParamMap::new(d, d, move |s, t| p1.iter().map(|[c, a, u, w, ph]| c + a * (u * s + w * t + ph).sin()).collect()).with_partials(
        move |s, t| p2.iter().map(|[_, a, u, w, ph]| a * u * (u * s + w * t + ph).cos()).collect(),
        move |s, t| p3.iter().map(|[_, a, u, w, ph]| a * w * (u * s + w * t + ph).cos()).collect(),
    )
}

/// Smooth invertible frame `A(x) = 2I + 0.3·S(x)` with
/// `S_ij = sin(Σ_a w_ija x_a + φ_ij)` and analytic partials.
pub fn random_frame(m: usize, n: usize, rng: &mut ChaCha8Rng) -> FrameField {
    let w: Vec<f64> = (0..m * m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ph: Vec<f64> = (0..m * m).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let arg = move |w: &[f64], ph: &[f64], x: &DVector<f64>, i: usize, j: usize| {
        ph[i * m + j] + (0..n).map(|a| w[(i * m + j) * n + a] * x[a]).sum::<f64>()
    };
    let (w1, ph1, w2, ph2) = (w.clone(), ph.clone(), w, ph);
    FrameField::on_chart(move |x| {
        DMatrix::from_fn(m, m, |i, j| if i == j { 2.0 } else { 0.0 } + 0.3 * arg(&w1, &ph1, x, i, j).sin())
    })
    .with_partials(move |x| {
        (0..n).map(|a| DMatrix::from_fn(m, m, |i, j| 0.3 * w2[(i * m + j) * n + a] * arg(&w2, &ph2, x, i, j).cos())).collect()
    })
}

fn random_section(m: usize, rng: &mut ChaCha8Rng) -> SectionAlongPath {
    let p: Vec<[f64; 3]> = (0..m).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(0.5..3.0), rng.random_range(0.0..6.0)]).collect();
    let q = p.clone();
    SectionAlongPath::new(Interval { lo: 0.0, hi: 1.0 }, move |s| p.iter().map(|[a, w, ph]| a * (w * s + ph).sin()).collect())
        .with_derivative(move |s| q.iter().map(|[a, w, ph]| a * w * (w * s + ph).cos()).collect())
}

enum Limit {
    AtMost(f64),
    AtLeast(f64),
    /// Reported for information only.
    None,
}

struct Check {
    name: &'static str,
    value: f64,
    limit: Limit,
}

#[allow(clippy::too_many_arguments)]
fn verify_props(
    s: &Scenario,
    g: &ResolvedGeometry,
    f: &CoefficientFunctional,
    region: &Region,
    n_paths: usize,
    n_triples: usize,
    n_samples: usize,
    r: &mut Report,
) -> Result<()> {
    let (n, m) = (g.base_dim(), g.fiber_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let paths: Vec<Path> = random_test_paths(region, n_paths, s.seed);
    let mut checks: Vec<Check> = Vec::new();
    let (rtol, atol, fixed) = match s.integrator {
        Integrator::Adaptive { rtol, atol } => (rtol, atol, false),
        Integrator::FixedStep { .. } => (0.0, 0.0, true),
    };
    let bound = |h: &DMatrix<f64>| if fixed { 1e-6 } else { 10.0 * (rtol * inf_norm(h) + atol) };

    // Group laws: worst residual against the tightest per-triple tolerance,
    // which is never looser than checking each triple on its own.
    let (mut identity, mut comp, mut inv) = (0.0f64, 0.0f64, 0.0f64);
    let (mut comp_tol, mut inv_tol) = (f64::INFINITY, f64::INFINITY);
    for k in 0..n_triples {
        let p = &paths[k % paths.len()];
        let (a, b, c): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let i_m = DMatrix::identity(m, m);
        identity = identity.max(max_abs(&(transport_matrix(f, p, a, a, s.integrator)?.matrix - &i_m)));
        let h_ab = transport_matrix(f, p, a, b, s.integrator)?.matrix;
        let h_bc = transport_matrix(f, p, b, c, s.integrator)?.matrix;
        let h_ac = transport_matrix(f, p, a, c, s.integrator)?.matrix;
        let h_ba = transport_matrix(f, p, b, a, s.integrator)?.matrix;
        comp = comp.max(inf_norm(&(&h_bc * &h_ab - &h_ac)));
        comp_tol = comp_tol.min(bound(&h_ac));
        inv = inv.max(inf_norm(&(&h_ba * &h_ab - &i_m)));
        inv_tol = inv_tol.min(bound(&h_ab));
    }
    checks.push(Check { name: "transport-identity", value: identity, limit: Limit::AtMost(0.0) });
    checks.push(Check { name: "transport-composition", value: comp, limit: Limit::AtMost(comp_tol) });
    checks.push(Check { name: "transport-inverse", value: inv, limit: Limit::AtMost(inv_tol) });

    // Derivation limit against the analytic derivation.
    let mut worst_gap = 0.0f64;
    let mut min_order = f64::INFINITY;
    for p in &paths {
        let sec = random_section(m, &mut rng);
        let lim = derivation_limit(f, p, &sec, 0.5, &[1e-2, 1e-3, 1e-4], s.integrator)?;
        worst_gap = worst_gap.max((&lim.value.components - &lim.analytic.components).amax());
        // A sequence already at the noise floor has no fitted order and
        // counts as converged.
        let order = match lim.forward.fitted_order {
            Some(o) => o,
            None if lim.converges_linearly => f64::INFINITY,
            None => 0.0,
        };
        min_order = min_order.min(order);
    }
    checks.push(Check { name: "derivation-limit-gap", value: worst_gap, limit: Limit::AtMost(1e-6) });
    checks.push(Check { name: "derivation-limit-min-order", value: min_order, limit: Limit::AtLeast(0.9) });

    // Frame covariance with random frames.
    let tight = match s.integrator {
        Integrator::Adaptive { rtol, atol } => Integrator::adaptive(rtol.min(1e-11), atol.min(1e-13)),
        fixed => fixed,
    };
    let mut cov = 0.0f64;
    for p in paths.iter().take(n_paths.min(5)) {
        let frame = random_frame(m, n, &mut rng);
        let ft = f.transformed(&frame);
        let (a, b) = (0.1, 0.9);
        let lhs = transport_matrix(&ft, p, a, b, tight)?.matrix;
        let rhs = frame.inverse_along(p, b)? * transport_matrix(f, p, a, b, tight)?.matrix * frame.matrix_along(p, a)?;
        cov = cov.max(max_abs(&(lhs - rhs)));
    }
    checks.push(Check { name: "frame-covariance", value: cov, limit: Limit::AtMost(if fixed { 1e-6 } else { 1e-8 }) });

    // Torsion and curvature on random maps.
    let maps: Vec<TwoParamMap> = (0..n_paths.min(3)).map(|_| random_map(region, &mut rng)).collect();
    let pts: Vec<(f64, f64)> = (0..n_samples).map(|_| (rng.random_range(0.1..0.9), rng.random_range(0.1..0.9))).collect();
    if g.connection.chart().is_tangent() {
        let (mut t_max, mut t_gap) = (0.0f64, 0.0f64);
        for map in &maps {
            for &(a, b) in &pts {
                let tv = torsion_vector(f, map, a, b)?;
                let tensor = torsion_tensor(&g.connection, &map.point(a, b)?)?;
                let c = tensor.contract(&map.tangent_s(a, b)?, &map.tangent_t(a, b)?)?;
                t_gap = t_gap.max((c - &tv.components).amax());
                t_max = t_max.max(tv.components.amax());
            }
        }
        checks.push(Check { name: "torsion-tensor-contraction", value: t_gap, limit: Limit::AtMost(1e-7) });
        checks.push(Check { name: "torsion-max-abs", value: t_max, limit: Limit::None });
    }
    let (mut c_gap, mut anti) = (0.0f64, 0.0f64);
    for map in &maps {
        let check = transport_core::curvature::check_curvature_contraction(&g.connection, map, &pts, None)?;
        c_gap = c_gap.max(check.max_discrepancy);
        for &(a, b) in &pts {
            let t = curvature_tensor(&g.connection, &map.point(a, b)?, None)?;
            for ((i, j, al, be), v) in t.values.indexed_iter() {
                anti = anti.max((v + t.get(i, j, be, al)).abs());
            }
        }
    }
    checks.push(Check { name: "curvature-contraction", value: c_gap, limit: Limit::AtMost(1e-5) });
    checks.push(Check { name: "curvature-antisymmetry", value: anti, limit: Limit::AtMost(0.0) });

    let res = vec![if n <= 3 { 9 } else { 5 }; n];
    let cert = flatness_certificate(&g.connection, &Grid::new(region.clone(), res)?, None)?;
    checks.push(Check { name: "max-curvature-norm", value: cert.max_curvature_norm, limit: Limit::None });

    let mut all = true;
    for c in checks {
        let mut rec = Fields::new();
        put(&mut rec, "property", c.name);
        put_num(&mut rec, "value", c.value);
        let (kind, bound, pass) = match c.limit {
            Limit::AtMost(t) => ("at-most", t, Some(c.value <= t)),
            Limit::AtLeast(t) => ("at-least", t, Some(c.value >= t)),
            Limit::None => ("info", f64::NAN, None),
        };
        put(&mut rec, "limit", kind);
        put_num(&mut rec, "bound", bound);
        match pass {
            Some(p) => {
                all &= p;
                put(&mut rec, "pass", p);
            }
            None => put(&mut rec, "pass", serde_json::Value::Null),
        }
        r.records.push(rec);
    }
    put(&mut r.summary, "all_pass", all);
    put(&mut r.summary, "seed", s.seed);
    Ok(())
}
