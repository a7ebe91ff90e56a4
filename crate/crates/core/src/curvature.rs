//! Curvature of a linear transport: the matrix `R^η(s,t)^i_{.j}` of an
//! arbitrary coefficient functional over a two-parameter map, and the tensor
//! `R^i_{.jαβ}` of connection-induced coefficients.

use nalgebra::{DMatrix, DVector};
use ndarray::Array4;

use crate::connection::{CoefficientFunctional, ConnectionField};
use crate::error::{Error, Result};
use crate::linalg::{check_len, max_abs};
use crate::path::TwoParamMap;

/// Default relative step for differences across path families.
pub const FAMILY_FD_STEP: f64 = 1e-4;

/// Curvature components over a two-parameter map, with a step-halving error
/// estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureMatrix {
    pub matrix: DMatrix<f64>,
    /// `max |R(h) − R(h/2)|`.
    pub est_error: f64,
    pub step: f64,
}

/// `R^i_{.jαβ}` at a point, stored as `values[[i, j, α, β]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureTensor {
    pub values: Array4<f64>,
}

impl CurvatureTensor {
    pub fn fiber_dim(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn base_dim(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn get(&self, i: usize, j: usize, alpha: usize, beta: usize) -> f64 {
        self.values[[i, j, alpha, beta]]
    }

    /// `R^i_{.jαβ} u^α w^β`.
    pub fn contract(&self, u: &DVector<f64>, w: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (m, n) = (self.fiber_dim(), self.base_dim());
        check_len(u, n)?;
        check_len(w, n)?;
        Ok(DMatrix::from_fn(m, m, |i, j| {
            let mut acc = 0.0;
            for a in 0..n {
                for b in 0..n {
                    acc += self.values[[i, j, a, b]] * u[a] * w[b];
                }
            }
            acc
        }))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

fn family_step(s: f64, t: f64) -> f64 {
    FAMILY_FD_STEP * 1f64.max(s.abs()).max(t.abs())
}

fn raw_curvature(gamma_fun: &CoefficientFunctional, eta: &TwoParamMap, s: f64, t: f64, h: f64) -> Result<DMatrix<f64>> {
    // Γ(t; η(σ,·)) and Γ(s; η(·,τ)) as functions of the family parameter.
    let g_t = |sigma: f64| gamma_fun.eval(&eta.path_in_t(sigma), t);
    let g_s = |tau: f64| gamma_fun.eval(&eta.path_in_s(tau), s);
    let d_s = (g_t(s + h)? - g_t(s - h)?) / (2.0 * h);
    let d_t = (g_s(t + h)? - g_s(t - h)?) / (2.0 * h);
    let (a, b) = (g_s(t)?, g_t(s)?);
    Ok(d_s - d_t + &a * &b - &b * &a)
}

/// `R^η(s,t) = ∂_s Γ(t; η(s,·)) − ∂_t Γ(s; η(·,t)) + [Γ(s; η(·,t)), Γ(t; η(s,·))]`.
///
/// The parameter derivatives difference the functional across neighbouring
/// paths of the family (`η(s ± h, ·)` and `η(·, t ± h)`), never along a
/// single path. `h` defaults to `1e-4·max(1, |s|, |t|)`.
pub fn curvature_matrix(
    gamma_fun: &CoefficientFunctional,
    eta: &TwoParamMap,
    s: f64,
    t: f64,
    h: Option<f64>,
) -> Result<CurvatureMatrix> {
    let h = h.unwrap_or_else(|| family_step(s, t));
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("difference step must be positive, got {h}")));
    }
    for (v, dom) in [(s - h, eta.s_domain()), (s + h, eta.s_domain()), (t - h, eta.t_domain()), (t + h, eta.t_domain())] {
        dom.check(v)?;
    }
    let full = raw_curvature(gamma_fun, eta, s, t, h)?;
    let half = raw_curvature(gamma_fun, eta, s, t, 0.5 * h)?;
    let est_error = max_abs(&(&full - half));
    Ok(CurvatureMatrix { matrix: full, est_error, step: h })
}

/// `R^i_{.jαβ} = −∂_β Γ^i_{.jα} + ∂_α Γ^i_{.jβ} − Γ^k_{.jα} Γ^i_{.kβ} + Γ^k_{.jβ} Γ^i_{.kα}`,
/// using analytic partials when the connection has them and central
/// differences with relative step `h` (default: the connection's own step)
/// otherwise.
pub fn curvature_tensor(conn: &ConnectionField, x: &DVector<f64>, h: Option<f64>) -> Result<CurvatureTensor> {
    let (n, m) = (conn.chart().base_dim, conn.chart().fiber_dim);
    let g = conn.coefficients(x)?;
    let d = conn.partials(x, h.unwrap_or(conn.fd_step()))?;
    let mut values = Array4::zeros((m, m, n, n));
    for a in 0..n {
        for b in 0..n {
            // Grouped so that swapping (α, β) negates every term exactly.
            let block = (&d[a][b] - &d[b][a]) + (&g[a] * &g[b] - &g[b] * &g[a]);
            for i in 0..m {
                for j in 0..m {
                    values[[i, j, a, b]] = block[(i, j)];
                }
            }
        }
    }
    Ok(CurvatureTensor { values })
}

/// Discrepancy between the curvature matrix of the induced functional and the
/// curvature tensor contracted with `η′, η″`, at each sample.
#[derive(Debug, Clone)]
pub struct ContractionCheck {
    pub samples: Vec<(f64, f64)>,
    pub discrepancies: Vec<f64>,
    pub max_discrepancy: f64,
}

/// Check `R^η(s,t)^i_{.j} = R^i_{.jαβ}(η(s,t)) η′^α η″^β` at each sample.
pub fn check_curvature_contraction(
    conn: &ConnectionField,
    eta: &TwoParamMap,
    samples: &[(f64, f64)],
    h: Option<f64>,
) -> Result<ContractionCheck> {
    let f = CoefficientFunctional::Connection(conn.clone());
    let mut discrepancies = Vec::with_capacity(samples.len());
    for &(s, t) in samples {
        let lhs = curvature_matrix(&f, eta, s, t, h)?;
        let x = eta.point(s, t)?;
        let tensor = curvature_tensor(conn, &x, None)?;
        let rhs = tensor.contract(&eta.tangent_s(s, t)?, &eta.tangent_t(s, t)?)?;
        discrepancies.push(max_abs(&(lhs.matrix - rhs)));
    }
    let max_discrepancy = discrepancies.iter().copied().fold(0.0, f64::max);
    Ok(ContractionCheck { samples: samples.to_vec(), discrepancies, max_discrepancy })
}

/// Maximum discrepancy of the curvature contraction identity over `samples`.
pub fn contraction_discrepancy(conn: &ConnectionField, eta: &TwoParamMap, samples: &[(f64, f64)]) -> Result<f64> {
    Ok(check_curvature_contraction(conn, eta, samples, None)?.max_discrepancy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection::connection_functional;
    use crate::geometries;
    use crate::path::{ChartSpec, Interval};
    use std::f64::consts::FRAC_PI_2;

    fn sphere_square() -> TwoParamMap {
        TwoParamMap::new(Interval::new(0.3, 2.8).unwrap(), Interval::new(0.0, 6.0).unwrap(), |s, t| vec![s, t])
            .with_partials(|_, _| vec![1.0, 0.0], |_, _| vec![0.0, 1.0])
    }

    #[test]
    fn zero_functional_has_zero_curvature_exactly() {
        let d = Interval::new(0.0, 1.0).unwrap();
        let eta = TwoParamMap::new(d, d, |s, t| vec![s * t, s + t]);
        let r = curvature_matrix(&CoefficientFunctional::zero(2), &eta, 0.5, 0.5, None).unwrap();
        assert_eq!(r.matrix, DMatrix::zeros(2, 2));
    }

    #[test]
    fn sphere_tensor_at_equator() {
        let x = DVector::from_vec(vec![FRAC_PI_2, 1.0]);
        let t = curvature_tensor(&geometries::sphere(), &x, None).unwrap();
        assert!((t.get(0, 1, 0, 1).abs() - 1.0).abs() < 1e-7);
        let fd = curvature_tensor(&geometries::sphere().without_partials(), &x, None).unwrap();
        assert!((fd.get(0, 1, 0, 1).abs() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn sphere_matrix_matches_tensor_contraction() {
        let f = connection_functional(&geometries::sphere());
        let r = curvature_matrix(&f, &sphere_square(), FRAC_PI_2, 1.0, None).unwrap();
        let x = DVector::from_vec(vec![FRAC_PI_2, 1.0]);
        let t = curvature_tensor(&geometries::sphere(), &x, None).unwrap();
        let c = t.contract(&DVector::from_vec(vec![1.0, 0.0]), &DVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert!((r.matrix - &c).amax() < 1e-6);
        assert!((c[(0, 1)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn antisymmetry_is_exact() {
        for conn in [geometries::sphere(), geometries::sphere().without_partials(), geometries::euclidean_polar()] {
            let t = curvature_tensor(&conn, &DVector::from_vec(vec![1.1, 0.4]), None).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    for a in 0..2 {
                        for b in 0..2 {
                            assert_eq!(t.get(i, j, a, b) + t.get(i, j, b, a), 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn polar_is_flat() {
        let f = connection_functional(&geometries::euclidean_polar());
        let d = Interval::new(0.0, 1.0).unwrap();
        let eta = TwoParamMap::new(d, d, |s, t| vec![1.0 + 0.5 * s * t, s - 2.0 * t]);
        let r = curvature_matrix(&f, &eta, 0.4, 0.3, None).unwrap();
        assert!(r.matrix.amax() < 1e-6, "{}", r.matrix.amax());
    }

    #[test]
    fn stencil_leaving_rectangle_is_a_domain_error() {
        let f = connection_functional(&geometries::sphere());
        assert!(matches!(
            curvature_matrix(&f, &sphere_square(), 0.3, 1.0, None),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn contraction_check_on_zero_connection() {
        let conn = ConnectionField::zero(ChartSpec::new(2, 3).unwrap());
        let d = Interval::new(0.0, 1.0).unwrap();
        let eta = TwoParamMap::new(d, d, |s, t| vec![s, t]);
        assert_eq!(contraction_discrepancy(&conn, &eta, &[(0.5, 0.5)]).unwrap(), 0.0);
    }
}
