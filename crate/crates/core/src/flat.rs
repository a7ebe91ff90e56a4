//! Flatness certification and construction of frames in which the transport
//! coefficients vanish.
//!
//! The flat frame `A` (columns are the new basis vectors) solves
//! `dA/ds = −Γ(s;γ)·A` along every path, so along any path it is the
//! transport of its value at the start. It is built on a grid by transporting
//! the identity from the base point along axis-parallel coordinate lines, one
//! axis at a time.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::connection::{CoefficientFunctional, ConnectionField};
use crate::curvature::{curvature_tensor, FAMILY_FD_STEP};
use crate::error::{Error, Result};
use crate::frame::{frame_transform_coefficients, FrameField};
use crate::geometries::Region;
use crate::integrate::{integrate, Integrator};
use crate::linalg::{check_len, checked_inverse, max_abs};
use crate::path::{ChartSpec, Interval, Path, DEFAULT_FD_STEP};
use crate::torsion::torsion_tensor;
use crate::transport::transport_matrix;

/// Flatness threshold when coefficient partials are differenced.
pub const FLAT_THRESHOLD_FD: f64 = 1e-6;
/// Flatness threshold when coefficient partials are analytic.
pub const FLAT_THRESHOLD_ANALYTIC: f64 = 1e-8;

/// Fixed RK4 step count used to re-integrate from a grid node to an
/// off-grid point. A fixed count keeps the evaluator smooth in `x`.
const REINTEGRATION_STEPS: f64 = 64.0;

/// Tensor-product grid over a box.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub region: Region,
    pub resolution: Vec<usize>,
}

impl Grid {
    pub fn new(region: Region, resolution: Vec<usize>) -> Result<Self> {
        let n = region.dim();
        if n == 0 || region.hi.len() != n {
            return Err(Error::InvalidArgument("region bounds must have matching positive length".into()));
        }
        if resolution.len() != n {
            return Err(Error::Shape { expected: n, got: resolution.len() });
        }
        for k in 0..n {
            let (lo, hi) = (region.lo[k], region.hi[k]);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidArgument(format!("invalid bounds [{lo}, {hi}] on axis {}", k + 1)));
            }
            if resolution[k] == 0 {
                return Err(Error::InvalidArgument("grid resolution must be positive".into()));
            }
        }
        Ok(Self { region, resolution })
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn axis(&self, k: usize) -> Vec<f64> {
        let (lo, hi, r) = (self.region.lo[k], self.region.hi[k], self.resolution[k]);
        if r == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..r).map(|i| lo + (hi - lo) * i as f64 / (r - 1) as f64).collect()
    }

    pub fn node_count(&self) -> usize {
        self.resolution.iter().product()
    }

    /// Row-major multi-index of a flat node index (last axis fastest).
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = flat % self.resolution[k];
            flat /= self.resolution[k];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.resolution).fold(0, |acc, (i, r)| acc * r + i)
    }

    pub fn node(&self, idx: &[usize]) -> DVector<f64> {
        DVector::from_iterator(self.dim(), idx.iter().enumerate().map(|(k, &i)| self.axis(k)[i]))
    }

    pub fn nodes(&self) -> Vec<DVector<f64>> {
        (0..self.node_count()).map(|f| self.node(&self.multi_index(f))).collect()
    }

    /// Index of the node nearest to `x` (clamped to the grid).
    pub fn nearest(&self, x: &DVector<f64>) -> Vec<usize> {
        (0..self.dim())
            .map(|k| {
                let r = self.resolution[k];
                if r == 1 {
                    return 0;
                }
                let (lo, hi) = (self.region.lo[k], self.region.hi[k]);
                let u = if hi > lo { (x[k] - lo) / (hi - lo) * (r - 1) as f64 } else { 0.0 };
                u.round().clamp(0.0, (r - 1) as f64) as usize
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flatness {
    Flat,
    NotFlat,
}

#[derive(Debug, Clone)]
pub struct FlatnessCertificate {
    /// Max over grid nodes and indices of `|R^i_{.jαβ}|`.
    pub max_curvature_norm: f64,
    /// Node where the maximum occurs.
    pub argmax: DVector<f64>,
    pub grid: Grid,
    pub threshold: f64,
    pub verdict: Flatness,
}

impl FlatnessCertificate {
    pub fn is_flat(&self) -> bool {
        self.verdict == Flatness::Flat
    }
}

pub fn default_flat_threshold(conn: &ConnectionField) -> f64 {
    if conn.has_analytic_partials() {
        FLAT_THRESHOLD_ANALYTIC
    } else {
        FLAT_THRESHOLD_FD
    }
}

/// Evaluate the curvature tensor at every grid node and compare the largest
/// component with `threshold` (default depends on whether partials are
/// analytic).
pub fn flatness_certificate(conn: &ConnectionField, grid: &Grid, threshold: Option<f64>) -> Result<FlatnessCertificate> {
    if grid.dim() != conn.chart().base_dim {
        return Err(Error::Shape { expected: conn.chart().base_dim, got: grid.dim() });
    }
    let threshold = threshold.unwrap_or_else(|| default_flat_threshold(conn));
    let norms: Vec<(f64, DVector<f64>)> = grid
        .nodes()
        .into_par_iter()
        .map(|x| {
            let r = curvature_tensor(conn, &x, None).map_err(|e| at_node(e, &x))?;
            Ok((r.max_abs(), x))
        })
        .collect::<Result<_>>()?;
    let (max, argmax) = norms
        .into_iter()
        .fold((0.0, DVector::zeros(grid.dim())), |acc, (v, x)| if v > acc.0 || acc.1.is_empty() { (v, x) } else { acc });
    let verdict = if max < threshold { Flatness::Flat } else { Flatness::NotFlat };
    Ok(FlatnessCertificate { max_curvature_norm: max, argmax, grid: grid.clone(), threshold, verdict })
}

fn at_node(e: Error, x: &DVector<f64>) -> Error {
    match e {
        Error::Evaluation(msg) => Error::Evaluation(format!("{msg} (at grid node {:?})", x.as_slice())),
        other => other,
    }
}

/// Settings for `build_flat_frame`.
#[derive(Debug, Clone)]
pub struct FlatFrameOptions {
    /// Flatness threshold; `None` picks the default for the connection.
    pub threshold: Option<f64>,
    /// Order in which coordinate axes are swept (0-based).
    pub axis_order: Option<Vec<usize>>,
    /// Integrator for the node-to-node transports.
    pub integrator: Integrator,
    pub test_paths: usize,
    pub samples_per_path: usize,
    pub seed: u64,
}

impl Default for FlatFrameOptions {
    fn default() -> Self {
        Self {
            threshold: None,
            axis_order: None,
            integrator: Integrator::adaptive(1e-12, 1e-14),
            test_paths: 20,
            samples_per_path: 10,
            seed: 0,
        }
    }
}

/// Frames at the grid nodes.
#[derive(Debug, Clone)]
pub struct FrameGrid {
    pub grid: Grid,
    pub basepoint: DVector<f64>,
    /// Indexed by flat node index.
    pub frames: Vec<DMatrix<f64>>,
}

impl FrameGrid {
    pub fn frame_at(&self, idx: &[usize]) -> &DMatrix<f64> {
        &self.frames[self.grid.flat_index(idx)]
    }
}

#[derive(Debug, Clone)]
pub struct FlatFrameResult {
    pub frame: FrameField,
    pub nodes: Arc<FrameGrid>,
    pub basepoint: DVector<f64>,
    /// Max `|Γ′|` over the random test paths, in the constructed frame.
    pub residual: f64,
    pub certificate: FlatnessCertificate,
}

fn transport_between(f: &CoefficientFunctional, from: &DVector<f64>, to: &DVector<f64>, integrator: Integrator) -> Result<DMatrix<f64>> {
    if from == to {
        return Ok(DMatrix::identity(f.fiber_dim(), f.fiber_dim()));
    }
    let seg = Path::segment(from.clone(), to.clone());
    Ok(transport_matrix(f, &seg, 0.0, 1.0, integrator)?.matrix)
}

/// Transport the identity from the base point to every grid node along
/// axis-parallel lines, sweeping axes in `order`.
fn sweep_nodes(conn: &ConnectionField, grid: &Grid, basepoint: &DVector<f64>, order: &[usize], integrator: Integrator) -> Result<Vec<DMatrix<f64>>> {
    let f = CoefficientFunctional::Connection(conn.clone());
    let m = conn.chart().fiber_dim;
    // Points reached so far, each tagged with the grid indices fixed so far.
    let mut front: Vec<(Vec<Option<usize>>, DVector<f64>, DMatrix<f64>)> =
        vec![(vec![None; grid.dim()], basepoint.clone(), DMatrix::identity(m, m))];
    for &axis in order {
        let values = grid.axis(axis);
        front = front
            .into_par_iter()
            .map(|(tags, p, a)| {
                values
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let mut q = p.clone();
                        q[axis] = v;
                        let h = transport_between(&f, &p, &q, integrator)?;
                        let mut t = tags.clone();
                        t[axis] = Some(i);
                        Ok((t, q, h * &a))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
    }
    let mut frames = vec![DMatrix::zeros(m, m); grid.node_count()];
    for (tags, _, a) in front {
        let idx: Vec<usize> = tags.into_iter().map(|t| t.expect("every axis swept")).collect();
        frames[grid.flat_index(&idx)] = a;
    }
    Ok(frames)
}

/// `A(x)` re-integrated from the node `anchor` with fixed-step RK4.
fn reintegrate(conn: &ConnectionField, nodes: &FrameGrid, anchor: &[usize], x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let from = nodes.grid.node(anchor);
    let a0 = nodes.frame_at(anchor).clone();
    if &from == x {
        return Ok(a0);
    }
    let d = x - &from;
    let sol = integrate(
        |s, a| {
            let p = &from + &d * s;
            Ok(-(conn.contract(&p, &d)? * a))
        },
        0.0,
        1.0,
        a0,
        Integrator::fixed(1.0 / REINTEGRATION_STEPS),
    )?;
    Ok(sol.state)
}

fn flat_frame_field(conn: &ConnectionField, nodes: Arc<FrameGrid>) -> FrameField {
    let (c1, n1) = (conn.clone(), nodes.clone());
    let (c2, n2) = (conn.clone(), nodes);
    FrameField::try_on_chart(move |x| reintegrate(&c1, &n1, &n1.grid.nearest(x), x)).try_with_partials(move |x| {
        // Differences anchored at the node nearest the centre keep the
        // stencil on one smooth branch of the evaluator.
        let anchor = n2.grid.nearest(x);
        (0..x.len())
            .map(|alpha| {
                let h = DEFAULT_FD_STEP * x[alpha].abs().max(1.0);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[alpha] += h;
                xm[alpha] -= h;
                Ok((reintegrate(&c2, &n2, &anchor, &xp)? - reintegrate(&c2, &n2, &anchor, &xm)?) / (2.0 * h))
            })
            .collect()
    })
}

/// Smooth random paths `x_k(s) = c_k + a_k sin(ω_k s + φ_k)`, `s ∈ [0, 1]`,
/// staying inside `region`.
pub fn random_test_paths(region: &Region, count: usize, seed: u64) -> Vec<Path> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = region.dim();
    (0..count)
        .map(|_| {
            let params: Vec<(f64, f64, f64, f64)> = (0..n)
                .map(|k| {
                    let (lo, hi) = (region.lo[k], region.hi[k]);
                    let half = 0.5 * (hi - lo);
                    let amp = rng.random_range(0.1..0.45) * half;
                    let centre = lo + half + rng.random_range(-1.0..1.0) * (half - amp) * 0.9;
                    (centre, amp, rng.random_range(1.0..4.0), rng.random_range(0.0..std::f64::consts::TAU))
                })
                .collect();
            let p2 = params.clone();
            Path::new(Interval { lo: 0.0, hi: 1.0 }, move |s| params.iter().map(|(c, a, w, ph)| c + a * (w * s + ph).sin()).collect())
                .with_velocity(move |s| p2.iter().map(|(_, a, w, ph)| a * w * (w * s + ph).cos()).collect())
        })
        .collect()
}

/// Max over paths, samples and indices of the transport coefficients
/// expressed in `frame`.
pub fn residual_coefficients(conn: &ConnectionField, frame: &FrameField, test_paths: &[Path], samples_per_path: usize) -> Result<f64> {
    let f = CoefficientFunctional::Connection(conn.clone());
    let k = samples_per_path.max(1);
    test_paths
        .par_iter()
        .map(|p| {
            let dom = p.domain();
            let mut worst = 0.0f64;
            for i in 0..k {
                let s = if k == 1 { dom.lo } else { dom.lo + dom.length() * i as f64 / (k - 1) as f64 };
                worst = worst.max(max_abs(&frame_transform_coefficients(&f, frame, p, s)?));
            }
            Ok(worst)
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Certify flatness on `grid`, then build the frame with vanishing
/// coefficients by transporting the identity from `basepoint`.
pub fn build_flat_frame(conn: &ConnectionField, basepoint: &DVector<f64>, grid: &Grid, options: &FlatFrameOptions) -> Result<FlatFrameResult> {
    let n = conn.chart().base_dim;
    check_len(basepoint, n)?;
    if !grid.region.contains(basepoint) {
        return Err(Error::InvalidArgument(format!("basepoint {:?} outside region", basepoint.as_slice())));
    }
    let order = options.axis_order.clone().unwrap_or_else(|| (0..n).collect());
    let mut sorted = order.clone();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(Error::InvalidArgument(format!("axis order {order:?} is not a permutation of 0..{n}")));
    }
    let certificate = flatness_certificate(conn, grid, options.threshold)?;
    if !certificate.is_flat() {
        return Err(Error::FlatnessViolation {
            max_curvature: certificate.max_curvature_norm,
            threshold: certificate.threshold,
        });
    }
    let frames = sweep_nodes(conn, grid, basepoint, &order, options.integrator)?;
    for a in &frames {
        checked_inverse(a, Default::default())?;
    }
    let nodes = Arc::new(FrameGrid { grid: grid.clone(), basepoint: basepoint.clone(), frames });
    let frame = flat_frame_field(conn, nodes.clone());
    let paths = random_test_paths(&grid.region, options.test_paths, options.seed);
    let residual = residual_coefficients(conn, &frame, &paths, options.samples_per_path)?;
    Ok(FlatFrameResult { frame, nodes, basepoint: basepoint.clone(), residual, certificate })
}

/// Connection whose coefficients vanish in the frame `frame`:
/// `Γ^i_{.jα} = −(∂A/∂x^α · A⁻¹)^i_j`.
pub fn coefficients_from_zero_frame(frame: &FrameField, chart: ChartSpec) -> Result<ConnectionField> {
    if !frame.is_on_chart() {
        return Err(Error::InvalidArgument("frame must be defined on the chart".into()));
    }
    let bounds = frame.det_bounds();
    let f = frame.clone();
    let h = DEFAULT_FD_STEP;
    let conn = ConnectionField::try_new(chart, move |x| {
        let a = f.at_point(x)?;
        let inv = checked_inverse(&a, bounds)?;
        Ok(f.chart_partials(x, h)?.iter().map(|d| -(d * &inv)).collect())
    });
    // Differencing coefficients that are themselves differences needs the
    // coarser family step.
    Ok(if frame.has_analytic_derivatives() { conn } else { conn.with_fd_step(FAMILY_FD_STEP) })
}

/// Commutators `[e_j, e_k]^i` of the frame vector fields
/// `e_j = A^i_{.j} ∂/∂x^i` at `x`, with the connection's torsion there.
#[derive(Debug, Clone)]
pub struct HolonomicObstruction {
    /// `values[[i, j, k]] = [e_j, e_k]^i`.
    pub commutators: Array3<f64>,
    /// Max over `(j, k)` of the Euclidean norm of `[e_j, e_k]`.
    pub max_norm: f64,
    pub torsion_max: f64,
}

pub fn holonomic_obstruction(conn: &ConnectionField, frame: &FrameField, x: &DVector<f64>, h: f64) -> Result<HolonomicObstruction> {
    conn.chart().require_tangent()?;
    let n = conn.chart().base_dim;
    check_len(x, n)?;
    let a = frame.at_point(x)?;
    if a.nrows() != n {
        return Err(Error::Shape { expected: n, got: a.nrows() });
    }
    let d = frame.chart_partials(x, h)?;
    // e_j^l = a[(l, j)], ∂_l e_k^i = d[l][(i, k)]
    let commutators = Array3::from_shape_fn((n, n, n), |(i, j, k)| {
        (0..n).map(|l| a[(l, j)] * d[l][(i, k)] - a[(l, k)] * d[l][(i, j)]).sum::<f64>()
    });
    let mut max_norm = 0.0f64;
    for j in 0..n {
        for k in 0..n {
            let norm = (0..n).map(|i| commutators[[i, j, k]].powi(2)).sum::<f64>().sqrt();
            max_norm = max_norm.max(norm);
        }
    }
    let torsion_max = torsion_tensor(conn, x)?.max_abs();
    Ok(HolonomicObstruction { commutators, max_norm, torsion_max })
}
