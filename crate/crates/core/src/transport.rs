//! Transport matrices, the derivation along paths, and loop holonomy.
//!
//! The components of a transported vector satisfy `dv/dτ + Γ(τ;γ)·v = 0`, so
//! the matrix `H` of the transport from `s` to `t` solves
//! `dH/dτ = −Γ(τ;γ)·H`, `H(s) = I`, evaluated at `τ = t`.

use nalgebra::{DMatrix, DVector};

use crate::connection::CoefficientFunctional;
use crate::error::{Error, Result};
use crate::integrate::{integrate, Integrator};
use crate::linalg::{check_len, checked_inverse, DetBounds};
use crate::path::{Path, SectionAlongPath};

/// Closedness tolerance for loops, coordinate-wise.
pub const LOOP_TOLERANCE: f64 = 1e-10;

/// Matrix of the transport from `from` to `to` along a path, in the working
/// frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMatrix {
    pub matrix: DMatrix<f64>,
    pub from: f64,
    pub to: f64,
    /// Accumulated local error estimate of the integrator (zero for
    /// fixed-step runs, which carry no estimate).
    pub est_error: f64,
}

impl TransportMatrix {
    pub fn identity(m: usize, at: f64) -> Self {
        Self { matrix: DMatrix::identity(m, m), from: at, to: at, est_error: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Integrate the transport ODE along `path` from `s` to `t`.
pub fn transport_matrix(
    gamma_fun: &CoefficientFunctional,
    path: &Path,
    s: f64,
    t: f64,
    integrator: Integrator,
) -> Result<TransportMatrix> {
    let dom = path.domain();
    dom.check(s)?;
    dom.check(t)?;
    let m = gamma_fun.fiber_dim();
    if s == t {
        return Ok(TransportMatrix::identity(m, s));
    }
    let sol = integrate(
        |tau, h| Ok(-(gamma_fun.eval(path, tau.clamp(dom.lo, dom.hi))? * h)),
        s,
        t,
        DMatrix::identity(m, m),
        integrator,
    )?;
    checked_inverse(&sol.state, DetBounds { min: f64::MIN_POSITIVE, max: f64::MAX })?;
    Ok(TransportMatrix { matrix: sol.state, from: s, to: t, est_error: sol.est_error })
}

/// `H·v`.
pub fn apply_transport(h: &TransportMatrix, v: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(v, h.dim())?;
    Ok(&h.matrix * v)
}

/// Fiber components of `(Dσ)(γ(s))` in the working frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivationValue {
    pub components: DVector<f64>,
}

/// `dσ/ds + Γ(s;γ)·σ`.
pub fn derivation_analytic(
    gamma_fun: &CoefficientFunctional,
    path: &Path,
    section: &SectionAlongPath,
    s: f64,
) -> Result<DerivationValue> {
    path.domain().check(s)?;
    let sigma = section.components(s)?;
    check_len(&sigma, gamma_fun.fiber_dim())?;
    let dsigma = section.derivative(s)?;
    let g = gamma_fun.eval(path, s)?;
    Ok(DerivationValue { components: dsigma + g * sigma })
}

/// Difference quotients of the derivation for one sign of ε.
#[derive(Debug, Clone)]
pub struct LimitSequence {
    /// Signed steps (negative for the backward sequence).
    pub eps: Vec<f64>,
    pub quotients: Vec<DVector<f64>>,
    /// One-level Richardson extrapolation of the last two quotients.
    pub extrapolated: DVector<f64>,
    /// `‖q(ε) − analytic‖∞` for each step.
    pub errors: Vec<f64>,
    /// Least-squares slope of `ln error` against `ln |ε|`; `None` when all
    /// errors sit below the noise floor.
    pub fitted_order: Option<f64>,
    /// `max error / |ε|`.
    pub fitted_constant: f64,
}

impl LimitSequence {
    pub fn converges_linearly(&self, min_order: f64) -> bool {
        self.fitted_order.map_or(true, |p| p >= min_order)
    }
}

/// Result of probing the defining limit of the derivation.
#[derive(Debug, Clone)]
pub struct DerivationLimit {
    /// Extrapolated limit from the forward (`ε > 0`) sequence.
    pub value: DerivationValue,
    pub analytic: DerivationValue,
    pub forward: LimitSequence,
    /// Sequence with `ε < 0`, when `s − ε` stays inside the domain.
    pub backward: Option<LimitSequence>,
    /// False when the forward errors fail to shrink at least linearly.
    pub converges_linearly: bool,
}

/// Errors below this are treated as roundoff when fitting orders.
const LIMIT_NOISE_FLOOR: f64 = 1e-9;
const MIN_LIMIT_ORDER: f64 = 0.9;

fn fit_order(eps: &[f64], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(errors)
        .filter(|(_, e)| **e > LIMIT_NOISE_FLOOR)
        .map(|(x, e)| (x.abs().ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn limit_sequence(
    gamma_fun: &CoefficientFunctional,
    path: &Path,
    section: &SectionAlongPath,
    s: f64,
    steps: &[f64],
    analytic: &DVector<f64>,
    integrator: Integrator,
) -> Result<LimitSequence> {
    let sigma_s = section.components(s)?;
    let mut quotients = Vec::with_capacity(steps.len());
    for &e in steps {
        let h = transport_matrix(gamma_fun, path, s + e, s, integrator)?;
        let moved = apply_transport(&h, &section.components(s + e)?)?;
        quotients.push((moved - &sigma_s) / e);
    }
    let k = steps.len();
    let extrapolated = if k >= 2 {
        let (e1, e2) = (steps[k - 2], steps[k - 1]);
        (&quotients[k - 1] * e1 - &quotients[k - 2] * e2) / (e1 - e2)
    } else {
        quotients[0].clone()
    };
    let errors: Vec<f64> = quotients.iter().map(|q| (q - analytic).amax()).collect();
    let fitted_order = fit_order(steps, &errors);
    let fitted_constant = steps
        .iter()
        .zip(&errors)
        .map(|(e, err)| err / e.abs())
        .fold(0.0, f64::max);
    Ok(LimitSequence {
        eps: steps.to_vec(),
        quotients,
        extrapolated,
        errors,
        fitted_order,
        fitted_constant,
    })
}

/// Evaluate the quotient `[H(s+ε → s)·σ(s+ε) − σ(s)]/ε` along `eps`, which
/// must be positive and strictly decreasing.
pub fn derivation_limit(
    gamma_fun: &CoefficientFunctional,
    path: &Path,
    section: &SectionAlongPath,
    s: f64,
    eps: &[f64],
    integrator: Integrator,
) -> Result<DerivationLimit> {
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidArgument("eps sequence must be positive".into()));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("eps sequence must be strictly decreasing".into()));
    }
    let dom = path.domain();
    dom.check(s)?;
    for e in eps {
        dom.check(s + e)?;
    }
    let analytic = derivation_analytic(gamma_fun, path, section, s)?;
    let forward = limit_sequence(gamma_fun, path, section, s, eps, &analytic.components, integrator)?;
    let backward = if eps.iter().all(|e| dom.contains(s - e)) {
        let neg: Vec<f64> = eps.iter().map(|e| -e).collect();
        Some(limit_sequence(gamma_fun, path, section, s, &neg, &analytic.components, integrator)?)
    } else {
        None
    };
    let converges_linearly = forward.converges_linearly(MIN_LIMIT_ORDER);
    Ok(DerivationLimit {
        value: DerivationValue { components: forward.extrapolated.clone() },
        analytic,
        forward,
        backward,
        converges_linearly,
    })
}

/// Transport around a closed path over its whole parameter range.
pub fn loop_holonomy(gamma_fun: &CoefficientFunctional, path: &Path, integrator: Integrator) -> Result<TransportMatrix> {
    loop_holonomy_periodic(gamma_fun, path, &[], integrator)
}

/// As `loop_holonomy`, but coordinate `k` is identified modulo `periods[k]`
/// when that entry is `Some` (e.g. the longitude on a sphere).
pub fn loop_holonomy_periodic(
    gamma_fun: &CoefficientFunctional,
    path: &Path,
    periods: &[Option<f64>],
    integrator: Integrator,
) -> Result<TransportMatrix> {
    let dom = path.domain();
    let diff = path.point(dom.lo)? - path.point(dom.hi)?;
    let gap = diff
        .iter()
        .enumerate()
        .map(|(k, d)| match periods.get(k).copied().flatten() {
            Some(p) if p > 0.0 => {
                let r = d.rem_euclid(p);
                r.min(p - r)
            }
            _ => d.abs(),
        })
        .fold(0.0, f64::max);
    if gap > LOOP_TOLERANCE {
        return Err(Error::NotALoop { gap });
    }
    transport_matrix(gamma_fun, path, dom.lo, dom.hi, integrator)
}

/// Basis orthonormal for `metric` obtained by Gram–Schmidt on the
/// coordinate basis; columns are the basis vectors.
pub fn orthonormal_frame(metric: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = metric.nrows();
    if !metric.is_square() {
        return Err(Error::Shape { expected: n, got: metric.ncols() });
    }
    let dot = |a: &DVector<f64>, b: &DVector<f64>| (a.transpose() * metric * b)[(0, 0)];
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut v = DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 });
        for e in &basis {
            let c = dot(&v, e);
            v -= e * c;
        }
        let norm2 = dot(&v, &v);
        if !(norm2 > 0.0) {
            return Err(Error::InvalidArgument("metric is not positive definite".into()));
        }
        basis.push(v / norm2.sqrt());
    }
    Ok(DMatrix::from_columns(&basis))
}

/// Rotation angle of a 2×2 holonomy, measured in the orthonormal frame that
/// Gram–Schmidt builds from the coordinate basis and `metric` (the metric at
/// the loop's base point). Returned in `(−π, π]`.
pub fn rotation_angle(h: &TransportMatrix, metric: &DMatrix<f64>) -> Result<f64> {
    if h.dim() != 2 {
        return Err(Error::Shape { expected: 2, got: h.dim() });
    }
    let e = orthonormal_frame(metric)?;
    let inv = checked_inverse(&e, DetBounds::default())?;
    let r = inv * &h.matrix * e;
    Ok(r[(1, 0)].atan2(r[(0, 0)]))
}

/// Difference of two angles reduced to `(−π, π]`.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let d = (a - b).rem_euclid(tau);
    if d > std::f64::consts::PI {
        d - tau
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection::connection_functional;
    use crate::geometries;
    use crate::path::Interval;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn circle() -> Path {
        Path::new(Interval::new(0.0, 2.0 * PI).unwrap(), |t| vec![1.0, t]).with_velocity(|_| vec![0.0, 1.0])
    }

    #[test]
    fn zero_coefficients_give_exact_identity() {
        let h = transport_matrix(&CoefficientFunctional::zero(3), &circle(), 0.0, 4.0, Integrator::default()).unwrap();
        assert_eq!(h.matrix, DMatrix::identity(3, 3));
    }

    #[test]
    fn polar_quarter_turn() {
        let f = connection_functional(&geometries::euclidean_polar());
        let h = transport_matrix(&f, &circle(), 0.0, FRAC_PI_2, Integrator::default()).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!((&h.matrix - expected).amax() < 1e-8);
        let v = apply_transport(&h, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!((v - DVector::from_vec(vec![0.0, -1.0])).amax() < 1e-8);
    }

    #[test]
    fn polar_quarter_turn_matches_cartesian_push() {
        // e_x at φ = 0 is ∂_r; at φ = π/2 its polar components are
        // (cos φ, −sin φ / r) = (0, −1).
        let f = connection_functional(&geometries::euclidean_polar());
        let h = transport_matrix(&f, &circle(), 0.0, FRAC_PI_2, Integrator::default()).unwrap();
        let v = apply_transport(&h, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let phi = FRAC_PI_2;
        assert!((v[0] - phi.cos()).abs() < 1e-8 && (v[1] + phi.sin()).abs() < 1e-8);
    }

    #[test]
    fn scalar_constant_coefficient() {
        let a = 0.8;
        let f = CoefficientFunctional::general(1, move |_, _| Ok(DMatrix::from_element(1, 1, a)));
        let p = Path::new(Interval::new(0.0, 3.0).unwrap(), |s| vec![s]);
        let (s, t) = (0.5, 2.7);
        let h = transport_matrix(&f, &p, s, t, Integrator::default()).unwrap();
        assert!((h.matrix[(0, 0)] - (-a * (t - s)).exp()).abs() < 1e-10);
        let v = apply_transport(&h, &DVector::from_element(1, 1.0)).unwrap();
        assert!((v[0] - (-a * (t - s)).exp()).abs() < 1e-10);
    }

    #[test]
    fn apply_transport_shape_error() {
        let h = TransportMatrix::identity(2, 0.0);
        assert!(matches!(apply_transport(&h, &DVector::from_vec(vec![1.0])), Err(Error::Shape { .. })));
        let v = apply_transport(&h, &DVector::from_vec(vec![3.0, 4.0])).unwrap();
        assert_eq!(v, DVector::from_vec(vec![3.0, 4.0]));
    }

    #[test]
    fn derivation_of_constant_section_in_flat_frame() {
        let p = circle();
        let sec = SectionAlongPath::new(p.domain(), |_| vec![2.0, -1.0]);
        let d = derivation_analytic(&CoefficientFunctional::zero(2), &p, &sec, 1.0).unwrap();
        assert!(d.components.amax() < 1e-12);
    }

    #[test]
    fn derivation_scalar_constant() {
        let a = 1.7;
        let f = CoefficientFunctional::general(1, move |_, _| Ok(DMatrix::from_element(1, 1, a)));
        let p = Path::new(Interval::new(0.0, 1.0).unwrap(), |s| vec![s]);
        let sec = SectionAlongPath::new(p.domain(), |_| vec![1.0]);
        let d = derivation_analytic(&f, &p, &sec, 0.5).unwrap();
        assert!((d.components[0] - a).abs() < 1e-12);
    }

    #[test]
    fn limit_of_identity_transport_is_plain_derivative() {
        let p = Path::new(Interval::new(0.0, 1.0).unwrap(), |s| vec![s]);
        let sec = SectionAlongPath::new(p.domain(), |s| vec![s]);
        let lim = derivation_limit(&CoefficientFunctional::zero(1), &p, &sec, 0.5, &[1e-2, 1e-3, 1e-4], Integrator::default())
            .unwrap();
        for q in &lim.forward.quotients {
            assert!((q[0] - 1.0).abs() < 1e-12);
        }
        assert!((lim.value.components[0] - 1.0).abs() < 1e-12);
        assert!(lim.converges_linearly);
        assert!(lim.backward.is_some());
    }

    #[test]
    fn limit_rejects_bad_sequences_and_domain_exits() {
        let p = Path::new(Interval::new(0.0, 1.0).unwrap(), |s| vec![s]);
        let sec = SectionAlongPath::new(p.domain(), |s| vec![s]);
        let f = CoefficientFunctional::zero(1);
        assert!(derivation_limit(&f, &p, &sec, 0.5, &[1e-3, 1e-2], Integrator::default()).is_err());
        assert!(matches!(
            derivation_limit(&f, &p, &sec, 0.999, &[1e-2], Integrator::default()),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn not_a_loop() {
        let p = Path::new(Interval::new(0.0, 1.0).unwrap(), |s| vec![s, 0.0]);
        assert!(matches!(
            loop_holonomy(&CoefficientFunctional::zero(2), &p, Integrator::default()),
            Err(Error::NotALoop { .. })
        ));
    }

    #[test]
    fn angle_difference_wraps() {
        assert!((angle_difference(PI, -PI)).abs() < 1e-15);
        assert!((angle_difference(0.1, 2.0 * PI)).abs() - 0.1 < 1e-15);
    }
}
