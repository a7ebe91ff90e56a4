//! Built-in connections with analytic coefficients and partials.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::connection::ConnectionField;
use crate::frame::FrameField;
use crate::path::ChartSpec;

pub type MetricFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Axis-aligned box in the chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim() && (0..self.dim()).all(|a| x[a] >= self.lo[a] && x[a] <= self.hi[a])
    }

    pub fn center(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)))
    }
}

/// A named connection together with an optional metric (used to measure
/// holonomy angles) and a default working region.
#[derive(Clone)]
pub struct Geometry {
    pub name: &'static str,
    pub description: &'static str,
    pub connection: ConnectionField,
    pub metric: Option<MetricFn>,
    pub region: Region,
    /// Period of each coordinate, if it is an angle that wraps around.
    pub periods: Vec<Option<f64>>,
}

impl std::fmt::Debug for Geometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Geometry")
            .field("name", &self.name)
            .field("connection", &self.connection)
            .field("region", &self.region)
            .finish()
    }
}

fn z2() -> DMatrix<f64> {
    DMatrix::zeros(2, 2)
}

fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a, b, c, d])
}

fn plane() -> ChartSpec {
    ChartSpec::tangent(2).expect("2 > 0")
}

pub fn euclidean_cartesian() -> ConnectionField {
    ConnectionField::zero(plane())
}

/// Levi-Civita connection of the flat plane in polar coordinates `(r, φ)`:
/// `Γ^r_{.φφ} = −r`, `Γ^φ_{.rφ} = Γ^φ_{.φr} = 1/r`.
pub fn euclidean_polar() -> ConnectionField {
    ConnectionField::new(plane(), |x| {
        let r = x[0];
        vec![m2(0.0, 0.0, 0.0, 1.0 / r), m2(0.0, -r, 1.0 / r, 0.0)]
    })
    .with_partials(|x| {
        let r = x[0];
        let d = -1.0 / (r * r);
        vec![vec![m2(0.0, 0.0, 0.0, d), m2(0.0, -1.0, d, 0.0)], vec![z2(), z2()]]
    })
}

/// Levi-Civita connection of the unit sphere in `(θ, φ)`:
/// `Γ^θ_{.φφ} = −sin θ cos θ`, `Γ^φ_{.θφ} = Γ^φ_{.φθ} = cot θ`.
pub fn sphere() -> ConnectionField {
    ConnectionField::new(plane(), |x| {
        let (s, c) = x[0].sin_cos();
        let cot = c / s;
        vec![m2(0.0, 0.0, 0.0, cot), m2(0.0, -s * c, cot, 0.0)]
    })
    .with_partials(|x| {
        let th = x[0];
        let s = th.sin();
        let dcot = -1.0 / (s * s);
        let dsc = (2.0 * th).cos();
        vec![vec![m2(0.0, 0.0, 0.0, dcot), m2(0.0, -dsc, dcot, 0.0)], vec![z2(), z2()]]
    })
}

/// Constant connection on the plane whose only nonzero coefficient is
/// `Γ^1_{.12} = c`.
pub fn torsion_constant(c: f64) -> ConnectionField {
    ConnectionField::constant(plane(), vec![z2(), m2(c, 0.0, 0.0, 0.0)])
}

/// Rotation of the plane by the angle `x¹`.
pub fn gauge_rotation_frame() -> FrameField {
    FrameField::on_chart(|x| {
        let (s, c) = x[0].sin_cos();
        m2(c, -s, s, c)
    })
    .with_partials(|x| {
        let (s, c) = x[0].sin_cos();
        vec![m2(-s, -c, c, -s), z2()]
    })
}

/// The connection in which `gauge_rotation_frame` has zero coefficients,
/// `Γ_α = −∂_α A·A⁻¹`: flat, with torsion.
pub fn gauge_rotation() -> ConnectionField {
    ConnectionField::constant(plane(), vec![m2(0.0, 1.0, -1.0, 0.0), z2()])
}

pub const BUILTIN_NAMES: [&str; 5] = [
    "euclidean-cartesian",
    "euclidean-polar",
    "sphere",
    "torsion-constant",
    "gauge-rotation",
];

/// Look up a built-in geometry; `torsion-constant` uses `c = 1`.
pub fn builtin(name: &str) -> Option<Geometry> {
    let identity: MetricFn = Arc::new(|_| DMatrix::identity(2, 2));
    let pi = std::f64::consts::PI;
    let g = match name {
        "euclidean-cartesian" => Geometry {
            name: "euclidean-cartesian",
            description: "flat plane, Cartesian coordinates (x, y); all coefficients zero",
            connection: euclidean_cartesian(),
            metric: Some(identity),
            region: Region::new(vec![-1.0, -1.0], vec![1.0, 1.0]),
            periods: vec![None, None],
        },
        "euclidean-polar" => Geometry {
            name: "euclidean-polar",
            description: "flat plane, polar coordinates (r, phi); symmetric and flat",
            connection: euclidean_polar(),
            metric: Some(Arc::new(|x| m2(1.0, 0.0, 0.0, x[0] * x[0]))),
            region: Region::new(vec![0.5, 0.0], vec![2.0, pi]),
            periods: vec![None, Some(2.0 * pi)],
        },
        "sphere" => Geometry {
            name: "sphere",
            description: "unit sphere, coordinates (theta, phi); symmetric, curvature sin^2(theta)",
            connection: sphere(),
            metric: Some(Arc::new(|x| m2(1.0, 0.0, 0.0, x[0].sin().powi(2)))),
            region: Region::new(vec![0.3, 0.0], vec![pi - 0.3, 2.0 * pi]),
            periods: vec![None, Some(2.0 * pi)],
        },
        "torsion-constant" => Geometry {
            name: "torsion-constant",
            description: "plane with the single constant coefficient Gamma^1_{12} = c (c = 1); flat, with torsion",
            connection: torsion_constant(1.0),
            metric: Some(identity),
            region: Region::new(vec![-1.0, -1.0], vec![1.0, 1.0]),
            periods: vec![None, None],
        },
        "gauge-rotation" => Geometry {
            name: "gauge-rotation",
            description: "pure-gauge connection of the frame rotating by angle x1; flat, with torsion",
            connection: gauge_rotation(),
            metric: Some(identity),
            region: Region::new(vec![-1.0, -1.0], vec![1.0, 1.0]),
            periods: vec![None, None],
        },
        _ => return None,
    };
    Some(g)
}
