//! Charts, paths, two-parameter maps and sections along paths.
//!
//! Paths are stored as callables over a closed parameter interval so that the
//! integrators and difference stencils can pick their own evaluation points.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Default relative step for central finite differences.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Dimensions of the base chart (`base_dim`) and of each fiber (`fiber_dim`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChartSpec {
    pub base_dim: usize,
    pub fiber_dim: usize,
}

impl ChartSpec {
    pub fn new(base_dim: usize, fiber_dim: usize) -> Result<Self> {
        if base_dim == 0 || fiber_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "chart dimensions must be positive (n = {base_dim}, m = {fiber_dim})"
            )));
        }
        Ok(Self { base_dim, fiber_dim })
    }

    /// Chart of a tangent bundle, where fiber and base dimensions agree.
    pub fn tangent(dim: usize) -> Result<Self> {
        Self::new(dim, dim)
    }

    pub fn is_tangent(&self) -> bool {
        self.base_dim == self.fiber_dim
    }

    pub fn require_tangent(&self) -> Result<()> {
        if self.is_tangent() {
            Ok(())
        } else {
            Err(Error::TangentBundle {
                fiber_dim: self.fiber_dim,
                base_dim: self.base_dim,
            })
        }
    }
}

/// Closed bounded parameter interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::InvalidArgument(format!(
                "invalid interval [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.lo && s <= self.hi
    }

    pub fn check(&self, s: f64) -> Result<()> {
        if self.contains(s) {
            Ok(())
        } else {
            Err(Error::Domain {
                param: s,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

pub type CurveFn = Arc<dyn Fn(f64) -> Result<DVector<f64>> + Send + Sync>;
pub type SurfaceFn = Arc<dyn Fn(f64, f64) -> Result<DVector<f64>> + Send + Sync>;

/// Relative finite-difference step at `x`: `h * max(1, |x|)`.
pub fn scaled_step(h: f64, x: f64) -> f64 {
    h * x.abs().max(1.0)
}

pub(crate) fn check_finite(v: &DVector<f64>, what: &str, at: f64) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::eval(format!("non-finite {what} at parameter {at}")))
    }
}

/// Second-order difference of a vector-valued function at `s` inside
/// `domain`: central in the interior, one-sided near the endpoints.
pub(crate) fn differentiate(
    f: &dyn Fn(f64) -> Result<DVector<f64>>,
    domain: Interval,
    s: f64,
    h: f64,
) -> Result<DVector<f64>> {
    if s - h >= domain.lo && s + h <= domain.hi {
        let fp = f(s + h)?;
        let fm = f(s - h)?;
        Ok((fp - fm) / (2.0 * h))
    } else if s + 2.0 * h <= domain.hi {
        let f0 = f(s)?;
        let f1 = f(s + h)?;
        let f2 = f(s + 2.0 * h)?;
        Ok((f1 * 4.0 - f0 * 3.0 - f2) / (2.0 * h))
    } else if s - 2.0 * h >= domain.lo {
        let f0 = f(s)?;
        let f1 = f(s - h)?;
        let f2 = f(s - 2.0 * h)?;
        Ok((f0 * 3.0 - f1 * 4.0 + f2) / (2.0 * h))
    } else {
        Err(Error::InvalidArgument(format!(
            "interval [{}, {}] too short for a difference step of {h:e}",
            domain.lo, domain.hi
        )))
    }
}

/// A path `s ↦ γ(s)` in a single coordinate chart.
#[derive(Clone)]
pub struct Path {
    domain: Interval,
    point: CurveFn,
    velocity: Option<CurveFn>,
    fd_step: f64,
}

impl fmt::Debug for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Path")
            .field("domain", &self.domain)
            .field("analytic_velocity", &self.velocity.is_some())
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

impl Path {
    /// Path from an infallible point function.
    pub fn new<F>(domain: Interval, point: F) -> Self
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::try_new(domain, move |s| Ok(DVector::from_vec(point(s))))
    }

    pub fn try_new<F>(domain: Interval, point: F) -> Self
    where
        F: Fn(f64) -> Result<DVector<f64>> + Send + Sync + 'static,
    {
        Self {
            domain,
            point: Arc::new(point),
            velocity: None,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    pub fn with_velocity<F>(self, velocity: F) -> Self
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        self.try_with_velocity(move |s| Ok(DVector::from_vec(velocity(s))))
    }

    pub fn try_with_velocity<F>(mut self, velocity: F) -> Self
    where
        F: Fn(f64) -> Result<DVector<f64>> + Send + Sync + 'static,
    {
        self.velocity = Some(Arc::new(velocity));
        self
    }

    pub(crate) fn from_parts(
        domain: Interval,
        point: CurveFn,
        velocity: Option<CurveFn>,
        fd_step: f64,
    ) -> Self {
        Self {
            domain,
            point,
            velocity,
            fd_step,
        }
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    /// Drop the analytic velocity so that differences are used instead.
    pub fn without_velocity(mut self) -> Self {
        self.velocity = None;
        self
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn has_velocity(&self) -> bool {
        self.velocity.is_some()
    }

    pub fn point(&self, s: f64) -> Result<DVector<f64>> {
        self.domain.check(s)?;
        let x = (self.point)(s)?;
        check_finite(&x, "path point", s)?;
        Ok(x)
    }

    /// Tangent components `γ̇^α(s)`.
    pub fn velocity(&self, s: f64) -> Result<DVector<f64>> {
        path_velocity(self, s)
    }

    /// Reparametrized path `u ↦ γ(φ(u))` over `domain`; the velocity is
    /// propagated by the chain rule when `dphi` is given.
    pub fn reparametrize<P, D>(&self, domain: Interval, phi: P, dphi: Option<D>) -> Path
    where
        P: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let phi = Arc::new(phi);
        let inner = self.clone();
        let p = {
            let inner = inner.clone();
            let phi = phi.clone();
            move |u: f64| inner.point(phi(u))
        };
        let mut out = Path::try_new(domain, p).with_fd_step(self.fd_step);
        if let Some(dphi) = dphi {
            out = out.try_with_velocity(move |u| Ok(inner.velocity(phi(u))? * dphi(u)));
        }
        out
    }

    /// Straight segment from `a` to `b` over `[0, 1]`.
    pub fn segment(a: DVector<f64>, b: DVector<f64>) -> Path {
        let d = &b - &a;
        let d2 = d.clone();
        Path::try_new(Interval { lo: 0.0, hi: 1.0 }, move |s| Ok(&a + &d * s))
            .try_with_velocity(move |_| Ok(d2.clone()))
    }
}

/// Velocity of `path` at `s`: the analytic velocity when supplied, otherwise
/// a central difference with step `h_fd * max(1, |s|)` (one-sided at the
/// interval endpoints).
pub fn path_velocity(path: &Path, s: f64) -> Result<DVector<f64>> {
    path.domain.check(s)?;
    if let Some(v) = &path.velocity {
        let v = v(s)?;
        check_finite(&v, "path velocity", s)?;
        return Ok(v);
    }
    let h = scaled_step(path.fd_step, s);
    let f = |u: f64| {
        let x = (path.point)(u)?;
        check_finite(&x, "path point", u)?;
        Ok(x)
    };
    differentiate(&f, path.domain, s, h)
}

/// A `C²` map `(s, t) ↦ η(s, t)` over a rectangle.
#[derive(Clone)]
pub struct TwoParamMap {
    s_domain: Interval,
    t_domain: Interval,
    point: SurfaceFn,
    partial_s: Option<SurfaceFn>,
    partial_t: Option<SurfaceFn>,
    fd_step: f64,
}

impl fmt::Debug for TwoParamMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TwoParamMap")
            .field("s_domain", &self.s_domain)
            .field("t_domain", &self.t_domain)
            .field("analytic_partials", &(self.partial_s.is_some(), self.partial_t.is_some()))
            .finish()
    }
}

impl TwoParamMap {
    pub fn new<F>(s_domain: Interval, t_domain: Interval, point: F) -> Self
    where
        F: Fn(f64, f64) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::try_new(s_domain, t_domain, move |s, t| Ok(DVector::from_vec(point(s, t))))
    }

    pub fn try_new<F>(s_domain: Interval, t_domain: Interval, point: F) -> Self
    where
        F: Fn(f64, f64) -> Result<DVector<f64>> + Send + Sync + 'static,
    {
        Self {
            s_domain,
            t_domain,
            point: Arc::new(point),
            partial_s: None,
            partial_t: None,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    pub fn with_partials<Fs, Ft>(self, ds: Fs, dt: Ft) -> Self
    where
        Fs: Fn(f64, f64) -> Vec<f64> + Send + Sync + 'static,
        Ft: Fn(f64, f64) -> Vec<f64> + Send + Sync + 'static,
    {
        self.try_with_partials(
            move |s, t| Ok(DVector::from_vec(ds(s, t))),
            move |s, t| Ok(DVector::from_vec(dt(s, t))),
        )
    }

    pub fn try_with_partials<Fs, Ft>(mut self, ds: Fs, dt: Ft) -> Self
    where
        Fs: Fn(f64, f64) -> Result<DVector<f64>> + Send + Sync + 'static,
        Ft: Fn(f64, f64) -> Result<DVector<f64>> + Send + Sync + 'static,
    {
        self.partial_s = Some(Arc::new(ds));
        self.partial_t = Some(Arc::new(dt));
        self
    }

    pub fn without_partials(mut self) -> Self {
        self.partial_s = None;
        self.partial_t = None;
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn s_domain(&self) -> Interval {
        self.s_domain
    }

    pub fn t_domain(&self) -> Interval {
        self.t_domain
    }

    pub fn check(&self, s: f64, t: f64) -> Result<()> {
        self.s_domain.check(s)?;
        self.t_domain.check(t)
    }

    pub fn point(&self, s: f64, t: f64) -> Result<DVector<f64>> {
        self.check(s, t)?;
        let x = (self.point)(s, t)?;
        check_finite(&x, "map point", s)?;
        Ok(x)
    }

    /// The path `η(·, t)`.
    pub fn path_in_s(&self, t: f64) -> Path {
        let p = self.point.clone();
        let point: CurveFn = Arc::new(move |s| p(s, t));
        let velocity = self.partial_s.clone().map(|d| {
            let v: CurveFn = Arc::new(move |s| d(s, t));
            v
        });
        Path::from_parts(self.s_domain, point, velocity, self.fd_step)
    }

    /// The path `η(s, ·)`.
    pub fn path_in_t(&self, s: f64) -> Path {
        let p = self.point.clone();
        let point: CurveFn = Arc::new(move |t| p(s, t));
        let velocity = self.partial_t.clone().map(|d| {
            let v: CurveFn = Arc::new(move |t| d(s, t));
            v
        });
        Path::from_parts(self.t_domain, point, velocity, self.fd_step)
    }

    /// `η′ = ∂η/∂s` at `(s, t)`.
    pub fn tangent_s(&self, s: f64, t: f64) -> Result<DVector<f64>> {
        self.t_domain.check(t)?;
        path_velocity(&self.path_in_s(t), s)
    }

    /// `η″ = ∂η/∂t` at `(s, t)`.
    pub fn tangent_t(&self, s: f64, t: f64) -> Result<DVector<f64>> {
        self.s_domain.check(s)?;
        path_velocity(&self.path_in_t(s), t)
    }

    /// The map with the roles of the parameters exchanged, `(s, t) ↦ η(t, s)`.
    pub fn transposed(&self) -> TwoParamMap {
        let p = self.point.clone();
        let swap = |f: SurfaceFn| -> SurfaceFn { Arc::new(move |s, t| f(t, s)) };
        TwoParamMap {
            s_domain: self.t_domain,
            t_domain: self.s_domain,
            point: Arc::new(move |s, t| p(t, s)),
            partial_s: self.partial_t.clone().map(swap),
            partial_t: self.partial_s.clone().map(swap),
            fd_step: self.fd_step,
        }
    }
}

/// Fiber components `σ^i(γ(s))` of a section along a path.
#[derive(Clone)]
pub struct SectionAlongPath {
    domain: Interval,
    components: CurveFn,
    derivative: Option<CurveFn>,
    fd_step: f64,
}

impl fmt::Debug for SectionAlongPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SectionAlongPath")
            .field("domain", &self.domain)
            .field("analytic_derivative", &self.derivative.is_some())
            .finish()
    }
}

impl SectionAlongPath {
    pub fn new<F>(domain: Interval, components: F) -> Self
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::try_new(domain, move |s| Ok(DVector::from_vec(components(s))))
    }

    pub fn try_new<F>(domain: Interval, components: F) -> Self
    where
        F: Fn(f64) -> Result<DVector<f64>> + Send + Sync + 'static,
    {
        Self {
            domain,
            components: Arc::new(components),
            derivative: None,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    pub fn with_derivative<F>(mut self, derivative: F) -> Self
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        self.derivative = Some(Arc::new(move |s| Ok(DVector::from_vec(derivative(s)))));
        self
    }

    pub fn try_with_derivative<F>(mut self, derivative: F) -> Self
    where
        F: Fn(f64) -> Result<DVector<f64>> + Send + Sync + 'static,
    {
        self.derivative = Some(Arc::new(derivative));
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn components(&self, s: f64) -> Result<DVector<f64>> {
        self.domain.check(s)?;
        let v = (self.components)(s)?;
        check_finite(&v, "section", s)?;
        Ok(v)
    }

    /// `dσ^i/ds`, analytic when supplied, else a central difference.
    pub fn derivative(&self, s: f64) -> Result<DVector<f64>> {
        self.domain.check(s)?;
        if let Some(d) = &self.derivative {
            let v = d(s)?;
            check_finite(&v, "section derivative", s)?;
            return Ok(v);
        }
        let f = |u: f64| self.components(u);
        differentiate(&f, self.domain, s, scaled_step(self.fd_step, s))
    }
}
