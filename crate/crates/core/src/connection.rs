//! Coefficient functionals `(γ, s) ↦ Γ(s; γ)` and point-dependent connection
//! coefficients `Γ^i_{.jα}(x)`.
//!
//! Storage convention: a coefficient matrix is stored with `G[(i, j)] = Γ^i_{.j}`
//! (row = upper index). Connection coefficients are a list of `n` such
//! matrices, one per base direction `α`, so `coeffs[α][(i, j)] = Γ^i_{.jα}`.
//! Coefficient partials are indexed `partials[β][α][(i, j)] = ∂Γ^i_{.jα}/∂x^β`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_len, check_square, is_finite};
use crate::path::{path_velocity, scaled_step, ChartSpec, Path, DEFAULT_FD_STEP};

/// `Γ^i_{.jα}(x)`: one `m×m` matrix per base direction.
pub type Coefficients = Vec<DMatrix<f64>>;

/// `∂Γ^i_{.jα}/∂x^β`, indexed `[β][α]`.
pub type CoefficientPartials = Vec<Vec<DMatrix<f64>>>;

pub type CoefficientFn = Arc<dyn Fn(&DVector<f64>) -> Result<Coefficients> + Send + Sync>;
pub type PartialsFn = Arc<dyn Fn(&DVector<f64>) -> Result<CoefficientPartials> + Send + Sync>;
pub type FunctionalFn = Arc<dyn Fn(&Path, f64) -> Result<DMatrix<f64>> + Send + Sync>;

/// Point-dependent coefficients of a linear transport of the contracted form
/// `Γ^i_{.j}(s; γ) = Γ^i_{.jα}(γ(s)) γ̇^α(s)`.
#[derive(Clone)]
pub struct ConnectionField {
    chart: ChartSpec,
    coeff: CoefficientFn,
    partials: Option<PartialsFn>,
    fd_step: f64,
}

impl fmt::Debug for ConnectionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConnectionField")
            .field("chart", &self.chart)
            .field("analytic_partials", &self.partials.is_some())
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

impl ConnectionField {
    pub fn new<F>(chart: ChartSpec, coeff: F) -> Self
    where
        F: Fn(&DVector<f64>) -> Coefficients + Send + Sync + 'static,
    {
        Self::try_new(chart, move |x| Ok(coeff(x)))
    }

    pub fn try_new<F>(chart: ChartSpec, coeff: F) -> Self
    where
        F: Fn(&DVector<f64>) -> Result<Coefficients> + Send + Sync + 'static,
    {
        Self {
            chart,
            coeff: Arc::new(coeff),
            partials: None,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    pub fn with_partials<F>(self, partials: F) -> Self
    where
        F: Fn(&DVector<f64>) -> CoefficientPartials + Send + Sync + 'static,
    {
        self.try_with_partials(move |x| Ok(partials(x)))
    }

    pub fn try_with_partials<F>(mut self, partials: F) -> Self
    where
        F: Fn(&DVector<f64>) -> Result<CoefficientPartials> + Send + Sync + 'static,
    {
        self.partials = Some(Arc::new(partials));
        self
    }

    /// Forget analytic partials; differences are used afterwards.
    pub fn without_partials(mut self) -> Self {
        self.partials = None;
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn zero(chart: ChartSpec) -> Self {
        let (n, m) = (chart.base_dim, chart.fiber_dim);
        Self::new(chart, move |_| vec![DMatrix::zeros(m, m); n])
            .with_partials(move |_| vec![vec![DMatrix::zeros(m, m); n]; n])
    }

    /// Coefficients that do not depend on the point.
    pub fn constant(chart: ChartSpec, coeffs: Coefficients) -> Self {
        let (n, m) = (chart.base_dim, chart.fiber_dim);
        Self::new(chart, move |_| coeffs.clone())
            .with_partials(move |_| vec![vec![DMatrix::zeros(m, m); n]; n])
    }

    pub fn chart(&self) -> ChartSpec {
        self.chart
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.partials.is_some()
    }

    pub fn coefficients(&self, x: &DVector<f64>) -> Result<Coefficients> {
        check_len(x, self.chart.base_dim)?;
        let c = (self.coeff)(x)?;
        if c.len() != self.chart.base_dim {
            return Err(Error::Shape { expected: self.chart.base_dim, got: c.len() });
        }
        for g in &c {
            check_square(g, self.chart.fiber_dim)?;
            if !is_finite(g) {
                return Err(Error::eval(format!("non-finite connection coefficient at {:?}", x.as_slice())));
            }
        }
        Ok(c)
    }

    /// `∂Γ^i_{.jα}/∂x^β` at `x`; analytic when supplied, otherwise central
    /// differences with relative step `h`.
    pub fn partials(&self, x: &DVector<f64>, h: f64) -> Result<CoefficientPartials> {
        check_len(x, self.chart.base_dim)?;
        let (n, m) = (self.chart.base_dim, self.chart.fiber_dim);
        if let Some(p) = &self.partials {
            let d = p(x)?;
            if d.len() != n {
                return Err(Error::Shape { expected: n, got: d.len() });
            }
            for row in &d {
                if row.len() != n {
                    return Err(Error::Shape { expected: n, got: row.len() });
                }
                for g in row {
                    check_square(g, m)?;
                    if !is_finite(g) {
                        return Err(Error::eval("non-finite coefficient partial"));
                    }
                }
            }
            return Ok(d);
        }
        let mut out = Vec::with_capacity(n);
        for beta in 0..n {
            let step = scaled_step(h, x[beta]);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[beta] += step;
            xm[beta] -= step;
            let cp = self.coefficients(&xp)?;
            let cm = self.coefficients(&xm)?;
            out.push(
                cp.iter()
                    .zip(&cm)
                    .map(|(a, b)| (a - b) / (2.0 * step))
                    .collect(),
            );
        }
        Ok(out)
    }

    /// `Σ_α Γ^i_{.jα}(x) v^α`.
    pub fn contract(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len(v, self.chart.base_dim)?;
        let coeffs = self.coefficients(x)?;
        Ok(contract_direction(&coeffs, v))
    }

    /// Whether `Γ^i_{.jk}(x) = Γ^i_{.kj}(x)` within `tol` (tangent bundles only).
    pub fn is_symmetric_at(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        self.chart.require_tangent()?;
        let c = self.coefficients(x)?;
        let n = self.chart.base_dim;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if (c[k][(i, j)] - c[j][(i, k)]).abs() > tol {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }
}

pub(crate) fn contract_direction(coeffs: &Coefficients, v: &DVector<f64>) -> DMatrix<f64> {
    let m = coeffs[0].nrows();
    let mut g = DMatrix::zeros(m, m);
    for (alpha, c) in coeffs.iter().enumerate() {
        g += c * v[alpha];
    }
    g
}

/// The map `(γ, s) ↦ Γ(s; γ)` giving the coefficients of a linear transport
/// along each path.
#[derive(Clone)]
pub enum CoefficientFunctional {
    /// Coefficients induced by a connection field.
    Connection(ConnectionField),
    /// An arbitrary path-dependent rule.
    General { fiber_dim: usize, eval: FunctionalFn },
}

impl fmt::Debug for CoefficientFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Connection(c) => f.debug_tuple("Connection").field(c).finish(),
            Self::General { fiber_dim, .. } => {
                f.debug_struct("General").field("fiber_dim", fiber_dim).finish()
            }
        }
    }
}

impl CoefficientFunctional {
    pub fn general<F>(fiber_dim: usize, eval: F) -> Self
    where
        F: Fn(&Path, f64) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    {
        Self::General { fiber_dim, eval: Arc::new(eval) }
    }

    /// `Γ ≡ 0` on an `m`-dimensional fiber.
    pub fn zero(fiber_dim: usize) -> Self {
        Self::general(fiber_dim, move |_, _| Ok(DMatrix::zeros(fiber_dim, fiber_dim)))
    }

    pub fn fiber_dim(&self) -> usize {
        match self {
            Self::Connection(c) => c.chart().fiber_dim,
            Self::General { fiber_dim, .. } => *fiber_dim,
        }
    }

    pub fn connection(&self) -> Option<&ConnectionField> {
        match self {
            Self::Connection(c) => Some(c),
            Self::General { .. } => None,
        }
    }

    pub fn require_connection(&self) -> Result<&ConnectionField> {
        self.connection().ok_or(Error::NotConnectionInduced)
    }

    pub fn eval(&self, path: &Path, s: f64) -> Result<DMatrix<f64>> {
        let g = match self {
            Self::Connection(conn) => {
                let x = path.point(s)?;
                let v = path_velocity(path, s)?;
                conn.contract(&x, &v)?
            }
            Self::General { eval, fiber_dim } => {
                let g = eval(path, s)?;
                check_square(&g, *fiber_dim)?;
                g
            }
        };
        if !is_finite(&g) {
            return Err(Error::eval(format!("non-finite coefficient matrix at s = {s}")));
        }
        Ok(g)
    }
}

/// The functional `Γ(s; γ) = Σ_α Γ^i_{.jα}(γ(s)) γ̇^α(s)` of a connection.
pub fn connection_functional(conn: &ConnectionField) -> CoefficientFunctional {
    CoefficientFunctional::Connection(conn.clone())
}
