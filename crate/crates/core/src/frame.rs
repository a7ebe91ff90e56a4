//! Frame fields and the change-of-frame law for transport coefficients.
//!
//! A frame is stored as `A[(i, i′)] = A^i_{i′}`: column `i′` holds the
//! components of the new basis vector `e_{i′}` in the old basis, so fiber
//! components transform as `v = A·v′`. Under this convention the coefficient
//! matrix in the new frame is `A⁻¹·Γ·A + A⁻¹·dA/ds`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::connection::CoefficientFunctional;
use crate::error::{Error, Result};
use crate::linalg::{checked_inverse, is_finite, DetBounds};
use crate::path::{path_velocity, scaled_step, Interval, Path, DEFAULT_FD_STEP};

pub type ParamMatrixFn = Arc<dyn Fn(f64) -> Result<DMatrix<f64>> + Send + Sync>;
pub type ChartMatrixFn = Arc<dyn Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync>;
pub type ChartPartialsFn = Arc<dyn Fn(&DVector<f64>) -> Result<Vec<DMatrix<f64>>> + Send + Sync>;

#[derive(Clone)]
enum FrameKind {
    AlongPath {
        domain: Interval,
        matrix: ParamMatrixFn,
        derivative: Option<ParamMatrixFn>,
    },
    OnChart {
        matrix: ChartMatrixFn,
        /// `∂A/∂x^α`, one matrix per base direction.
        partials: Option<ChartPartialsFn>,
    },
}

/// An invertible matrix field, given along a path or over the chart.
#[derive(Clone)]
pub struct FrameField {
    kind: FrameKind,
    bounds: DetBounds,
    fd_step: f64,
}

impl fmt::Debug for FrameField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            FrameKind::AlongPath { derivative, .. } => {
                format!("AlongPath(analytic_derivative = {})", derivative.is_some())
            }
            FrameKind::OnChart { partials, .. } => {
                format!("OnChart(analytic_partials = {})", partials.is_some())
            }
        };
        f.debug_struct("FrameField")
            .field("kind", &kind)
            .field("bounds", &self.bounds)
            .finish()
    }
}

impl FrameField {
    pub fn along_path<F>(domain: Interval, matrix: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            kind: FrameKind::AlongPath {
                domain,
                matrix: Arc::new(move |s| Ok(matrix(s))),
                derivative: None,
            },
            bounds: DetBounds::default(),
            fd_step: DEFAULT_FD_STEP,
        }
    }

    pub fn on_chart<F>(matrix: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::try_on_chart(move |x| Ok(matrix(x)))
    }

    pub fn try_on_chart<F>(matrix: F) -> Self
    where
        F: Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    {
        Self {
            kind: FrameKind::OnChart { matrix: Arc::new(matrix), partials: None },
            bounds: DetBounds::default(),
            fd_step: DEFAULT_FD_STEP,
        }
    }

    /// Constant frame `A(x) = a`.
    pub fn constant(a: DMatrix<f64>) -> Self {
        let n = a.nrows();
        Self::on_chart(move |_| a.clone()).with_partials(move |x| vec![DMatrix::zeros(n, n); x.len()])
    }

    pub fn identity(m: usize) -> Self {
        Self::constant(DMatrix::identity(m, m))
    }

    /// Attach the analytic derivative of an along-path frame.
    pub fn with_derivative<F>(mut self, derivative: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        if let FrameKind::AlongPath { derivative: d, .. } = &mut self.kind {
            *d = Some(Arc::new(move |s| Ok(derivative(s))));
        }
        self
    }

    /// Attach analytic chart partials `∂A/∂x^α` of an on-chart frame.
    pub fn with_partials<F>(self, partials: F) -> Self
    where
        F: Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.try_with_partials(move |x| Ok(partials(x)))
    }

    pub fn try_with_partials<F>(mut self, partials: F) -> Self
    where
        F: Fn(&DVector<f64>) -> Result<Vec<DMatrix<f64>>> + Send + Sync + 'static,
    {
        if let FrameKind::OnChart { partials: p, .. } = &mut self.kind {
            *p = Some(Arc::new(partials));
        }
        self
    }

    pub fn without_derivatives(mut self) -> Self {
        match &mut self.kind {
            FrameKind::AlongPath { derivative, .. } => *derivative = None,
            FrameKind::OnChart { partials, .. } => *partials = None,
        }
        self
    }

    pub fn with_det_bounds(mut self, bounds: DetBounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn det_bounds(&self) -> DetBounds {
        self.bounds
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        match &self.kind {
            FrameKind::AlongPath { derivative, .. } => derivative.is_some(),
            FrameKind::OnChart { partials, .. } => partials.is_some(),
        }
    }

    pub fn is_on_chart(&self) -> bool {
        matches!(self.kind, FrameKind::OnChart { .. })
    }

    fn checked(&self, a: DMatrix<f64>) -> Result<DMatrix<f64>> {
        if !is_finite(&a) {
            return Err(Error::eval("non-finite frame matrix"));
        }
        Ok(a)
    }

    /// `A(x)` for an on-chart frame.
    pub fn at_point(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.kind {
            FrameKind::OnChart { matrix, .. } => self.checked(matrix(x)?),
            FrameKind::AlongPath { .. } => Err(Error::InvalidArgument(
                "frame is defined along a path, not on the chart".into(),
            )),
        }
    }

    /// `∂A/∂x^α` for an on-chart frame, analytic or by central differences
    /// with relative step `h`.
    pub fn chart_partials(&self, x: &DVector<f64>, h: f64) -> Result<Vec<DMatrix<f64>>> {
        match &self.kind {
            FrameKind::OnChart { partials: Some(p), .. } => {
                let d = p(x)?;
                if d.len() != x.len() {
                    return Err(Error::Shape { expected: x.len(), got: d.len() });
                }
                d.into_iter().map(|m| self.checked(m)).collect()
            }
            FrameKind::OnChart { matrix, partials: None } => (0..x.len())
                .map(|alpha| {
                    let step = scaled_step(h, x[alpha]);
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[alpha] += step;
                    xm[alpha] -= step;
                    Ok((self.checked(matrix(&xp)?)? - self.checked(matrix(&xm)?)?) / (2.0 * step))
                })
                .collect(),
            FrameKind::AlongPath { .. } => Err(Error::InvalidArgument(
                "frame is defined along a path, not on the chart".into(),
            )),
        }
    }

    /// `A(s)` along `path`.
    pub fn matrix_along(&self, path: &Path, s: f64) -> Result<DMatrix<f64>> {
        match &self.kind {
            FrameKind::AlongPath { domain, matrix, .. } => {
                domain.check(s)?;
                self.checked(matrix(s)?)
            }
            FrameKind::OnChart { .. } => self.at_point(&path.point(s)?),
        }
    }

    /// `dA/ds` along `path`.
    pub fn derivative_along(&self, path: &Path, s: f64) -> Result<DMatrix<f64>> {
        match &self.kind {
            FrameKind::AlongPath { domain, derivative: Some(d), .. } => {
                domain.check(s)?;
                self.checked(d(s)?)
            }
            FrameKind::AlongPath { domain, matrix, derivative: None } => {
                domain.check(s)?;
                let h = scaled_step(self.fd_step, s);
                let (lo, hi) = if s - h >= domain.lo && s + h <= domain.hi {
                    (s - h, s + h)
                } else if s + h <= domain.hi {
                    (s, s + h)
                } else {
                    (s - h, s)
                };
                Ok((self.checked(matrix(hi)?)? - self.checked(matrix(lo)?)?) / (hi - lo))
            }
            FrameKind::OnChart { .. } => {
                let x = path.point(s)?;
                let v = path_velocity(path, s)?;
                let d = self.chart_partials(&x, self.fd_step)?;
                let m = d[0].nrows();
                let mut out = DMatrix::zeros(m, m);
                for (alpha, da) in d.iter().enumerate() {
                    out += da * v[alpha];
                }
                Ok(out)
            }
        }
    }

    pub fn inverse_along(&self, path: &Path, s: f64) -> Result<DMatrix<f64>> {
        checked_inverse(&self.matrix_along(path, s)?, self.bounds)
    }

    /// Pointwise product `(self·other)` of two frames of the same kind.
    pub fn compose(&self, other: &FrameField) -> Result<FrameField> {
        let (a, b) = (self.clone(), other.clone());
        let (a2, b2) = (self.clone(), other.clone());
        match (&self.kind, &other.kind) {
            (FrameKind::OnChart { .. }, FrameKind::OnChart { .. }) => Ok(FrameField::try_on_chart(move |x| {
                Ok(a.at_point(x)? * b.at_point(x)?)
            })
            .try_with_partials(move |x| {
                let (ma, mb) = (a2.at_point(x)?, b2.at_point(x)?);
                let (da, db) = (a2.chart_partials(x, a2.fd_step)?, b2.chart_partials(x, b2.fd_step)?);
                Ok(da.iter().zip(&db).map(|(da, db)| da * &mb + &ma * db).collect())
            })
            .with_det_bounds(self.bounds)),
            (FrameKind::AlongPath { domain, .. }, FrameKind::AlongPath { .. }) => {
                // Along-path frames ignore the path argument.
                let dummy = Path::new(*domain, |_| vec![0.0]);
                let d2 = dummy.clone();
                Ok(FrameField {
                    kind: FrameKind::AlongPath {
                        domain: *domain,
                        matrix: Arc::new(move |s| Ok(a.matrix_along(&dummy, s)? * b.matrix_along(&dummy, s)?)),
                        derivative: Some(Arc::new(move |s| {
                            let (ma, mb) = (a2.matrix_along(&d2, s)?, b2.matrix_along(&d2, s)?);
                            Ok(a2.derivative_along(&d2, s)? * mb + ma * b2.derivative_along(&d2, s)?)
                        })),
                    },
                    bounds: self.bounds,
                    fd_step: self.fd_step,
                })
            }
            _ => Err(Error::InvalidArgument(
                "cannot compose an on-chart frame with an along-path frame; restrict to the path first".into(),
            )),
        }
    }

    /// The on-chart frame restricted to `path`, as an along-path frame.
    pub fn restrict_to(&self, path: &Path) -> FrameField {
        let (a, a2) = (self.clone(), self.clone());
        let (p, p2) = (path.clone(), path.clone());
        FrameField {
            kind: FrameKind::AlongPath {
                domain: path.domain(),
                matrix: Arc::new(move |s| a.matrix_along(&p, s)),
                derivative: Some(Arc::new(move |s| a2.derivative_along(&p2, s))),
            },
            bounds: self.bounds,
            fd_step: self.fd_step,
        }
    }

    /// Pointwise inverse frame `A⁻¹`, with `d(A⁻¹) = −A⁻¹·dA·A⁻¹`.
    pub fn inverse(&self) -> FrameField {
        let bounds = self.bounds;
        let inv_bounds = DetBounds { min: 1.0 / bounds.max, max: 1.0 / bounds.min };
        let (a, a2) = (self.clone(), self.clone());
        match &self.kind {
            FrameKind::OnChart { .. } => {
                FrameField::try_on_chart(move |x| checked_inverse(&a.at_point(x)?, bounds))
                    .try_with_partials(move |x| {
                        let inv = checked_inverse(&a2.at_point(x)?, bounds)?;
                        Ok(a2
                            .chart_partials(x, a2.fd_step)?
                            .iter()
                            .map(|d| -(&inv * d * &inv))
                            .collect())
                    })
                    .with_det_bounds(inv_bounds)
            }
            FrameKind::AlongPath { domain, .. } => {
                let dummy = Path::new(*domain, |_| vec![0.0]);
                let d2 = dummy.clone();
                FrameField {
                    kind: FrameKind::AlongPath {
                        domain: *domain,
                        matrix: Arc::new(move |s| a.inverse_along(&dummy, s)),
                        derivative: Some(Arc::new(move |s| {
                            let inv = a2.inverse_along(&d2, s)?;
                            Ok(-(&inv * a2.derivative_along(&d2, s)? * &inv))
                        })),
                    },
                    bounds: inv_bounds,
                    fd_step: self.fd_step,
                }
            }
        }
    }
}

/// Coefficients of the transport in the frame `e_{i′} = A^i_{i′} e_i`:
/// `A⁻¹(s)·Γ(s;γ)·A(s) + A⁻¹(s)·dA/ds(s)`.
pub fn frame_transform_coefficients(
    gamma_fun: &CoefficientFunctional,
    frame: &FrameField,
    path: &Path,
    s: f64,
) -> Result<DMatrix<f64>> {
    path.domain().check(s)?;
    let a = frame.matrix_along(path, s)?;
    let inv = checked_inverse(&a, frame.bounds)?;
    let g = gamma_fun.eval(path, s)?;
    let da = frame.derivative_along(path, s)?;
    Ok(&inv * (g * &a + da))
}

impl CoefficientFunctional {
    /// The functional expressed in the frame `frame`.
    pub fn transformed(&self, frame: &FrameField) -> CoefficientFunctional {
        let (inner, frame) = (self.clone(), frame.clone());
        CoefficientFunctional::general(self.fiber_dim(), move |path, s| {
            frame_transform_coefficients(&inner, &frame, path, s)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection::connection_functional;
    use crate::geometries;

    fn path() -> Path {
        Path::new(Interval::new(0.0, 2.0).unwrap(), |s| vec![1.0 + 0.3 * s, s.sin()])
    }

    #[test]
    fn identity_frame_leaves_coefficients_unchanged() {
        let f = connection_functional(&geometries::euclidean_polar());
        let p = path();
        let g = f.eval(&p, 0.8).unwrap();
        let g2 = frame_transform_coefficients(&f, &FrameField::identity(2), &p, 0.8).unwrap();
        assert!((g - g2).amax() < 1e-15);
    }

    #[test]
    fn exponential_frame_on_zero_coefficients() {
        let dom = Interval::new(-1.0, 1.0).unwrap();
        let frame = FrameField::along_path(dom, |s| DMatrix::from_diagonal(&DVector::from_vec(vec![s.exp(), 1.0])))
            .with_derivative(|s| DMatrix::from_diagonal(&DVector::from_vec(vec![s.exp(), 0.0])));
        let p = Path::new(dom, |s| vec![s, -s]);
        let g = frame_transform_coefficients(&CoefficientFunctional::zero(2), &frame, &p, 0.37).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!((g - expected).amax() < 1e-14);
        // Same result through the difference-quotient derivative.
        let g = frame_transform_coefficients(&CoefficientFunctional::zero(2), &frame.without_derivatives(), &p, 0.37)
            .unwrap();
        assert!((g - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-9);
    }

    #[test]
    fn round_trip_through_inverse_frame() {
        let f = connection_functional(&geometries::sphere());
        let frame = FrameField::on_chart(|x| {
            DMatrix::from_row_slice(2, 2, &[2.0 + x[0].sin(), x[1], 0.3 * x[0], 1.5 + x[1].cos()])
        });
        let p = Path::new(Interval::new(0.0, 1.0).unwrap(), |s| vec![0.6 + 0.5 * s, 2.0 * s]);
        let back = f.transformed(&frame).transformed(&frame.inverse());
        for s in [0.1, 0.5, 0.9] {
            let d = back.eval(&p, s).unwrap() - f.eval(&p, s).unwrap();
            assert!(d.amax() < 1e-10, "{}", d.amax());
        }
    }

    #[test]
    fn singular_frame_is_reported() {
        let f = CoefficientFunctional::zero(2);
        let frame = FrameField::constant(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert!(matches!(
            frame_transform_coefficients(&f, &frame, &path(), 0.5),
            Err(Error::Invertibility(_))
        ));
    }

    #[test]
    fn parameter_outside_domain() {
        let f = CoefficientFunctional::zero(2);
        assert!(matches!(
            frame_transform_coefficients(&f, &FrameField::identity(2), &path(), 3.0),
            Err(Error::Domain { .. })
        ));
    }
}
