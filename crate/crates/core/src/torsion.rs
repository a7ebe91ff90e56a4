//! Torsion of a linear transport in a tangent bundle.

use nalgebra::DVector;
use ndarray::Array3;

use crate::connection::{CoefficientFunctional, ConnectionField};
use crate::error::{Error, Result};
use crate::linalg::check_len;
use crate::path::TwoParamMap;

/// Components of `T^η(s, t)` in the coordinate frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TorsionVector {
    pub components: DVector<f64>,
}

/// `T^i_{.jk} = Γ^i_{.kj} − Γ^i_{.jk}`, stored as `values[[i, j, k]]` and
/// contracted as `T^i_{.jk} A^j B^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorsionTensor {
    pub values: Array3<f64>,
}

impl TorsionTensor {
    pub fn dim(&self) -> usize {
        self.values.shape()[0]
    }

    /// `T(A, B)^i = T^i_{.jk} A^j B^k`.
    pub fn contract(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dim();
        check_len(a, n)?;
        check_len(b, n)?;
        let mut out = DVector::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    out[i] += self.values[[i, j, k]] * a[j] * b[k];
                }
            }
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// `T^i = Γ^i_{.j}(s; η(·,t)) η″^j − Γ^i_{.j}(t; η(s,·)) η′^j` with
/// `η′ = ∂η/∂s`, `η″ = ∂η/∂t` at `(s, t)`.
pub fn torsion_vector(gamma_fun: &CoefficientFunctional, eta: &TwoParamMap, s: f64, t: f64) -> Result<TorsionVector> {
    let x = eta.point(s, t)?;
    let m = gamma_fun.fiber_dim();
    if let Some(conn) = gamma_fun.connection() {
        conn.chart().require_tangent()?;
    }
    if m != x.len() {
        return Err(Error::TangentBundle { fiber_dim: m, base_dim: x.len() });
    }
    let along_s = eta.path_in_s(t);
    let along_t = eta.path_in_t(s);
    let d_s = eta.tangent_s(s, t)?;
    let d_t = eta.tangent_t(s, t)?;
    let g_s = gamma_fun.eval(&along_s, s)?;
    let g_t = gamma_fun.eval(&along_t, t)?;
    Ok(TorsionVector { components: g_s * d_t - g_t * d_s })
}

/// Torsion tensor of a connection at `x`.
pub fn torsion_tensor(conn: &ConnectionField, x: &DVector<f64>) -> Result<TorsionTensor> {
    conn.chart().require_tangent()?;
    let c = conn.coefficients(x)?;
    let n = conn.chart().base_dim;
    // c[α][(i, j)] = Γ^i_{.jα}
    let values = Array3::from_shape_fn((n, n, n), |(i, j, k)| c[j][(i, k)] - c[k][(i, j)]);
    Ok(TorsionTensor { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection::connection_functional;
    use crate::geometries;
    use crate::path::{ChartSpec, Interval};

    fn canonical_map() -> TwoParamMap {
        let d = Interval::new(-1.0, 1.0).unwrap();
        TwoParamMap::new(d, d, |s, t| vec![t, s])
    }

    #[test]
    fn constant_connection_torsion_vector() {
        let c = 0.75;
        let f = connection_functional(&geometries::torsion_constant(c));
        let tv = torsion_vector(&f, &canonical_map(), 0.2, -0.3).unwrap();
        assert!((tv.components[0] - c).abs() < 1e-9);
        assert!(tv.components[1].abs() < 1e-9);
    }

    #[test]
    fn constant_connection_torsion_tensor() {
        let c = 0.75;
        let t = torsion_tensor(&geometries::torsion_constant(c), &DVector::zeros(2)).unwrap();
        assert_eq!(t.values[[0, 1, 0]], c);
        assert_eq!(t.values[[0, 0, 1]], -c);
        let others: f64 = t.values.iter().map(|v| v.abs()).sum::<f64>() - 2.0 * c;
        assert_eq!(others, 0.0);
    }

    #[test]
    fn symmetric_connection_tensor_is_exactly_zero() {
        let t = torsion_tensor(&geometries::sphere(), &DVector::from_vec(vec![0.7, 1.1])).unwrap();
        assert_eq!(t.max_abs(), 0.0);
    }

    #[test]
    fn zero_functional_gives_zero_vector() {
        let tv = torsion_vector(&CoefficientFunctional::zero(2), &canonical_map(), 0.0, 0.0).unwrap();
        assert_eq!(tv.components, DVector::zeros(2));
    }

    #[test]
    fn polar_connection_is_torsion_free() {
        let f = connection_functional(&geometries::euclidean_polar());
        let d = Interval::new(0.0, 1.0).unwrap();
        let eta = TwoParamMap::new(d, d, |s, t| vec![1.0 + s * t + 0.2 * s, 0.5 * s - t * t]);
        let tv = torsion_vector(&f, &eta, 0.4, 0.6).unwrap();
        assert!(tv.components.amax() < 1e-7);
    }

    #[test]
    fn contraction_matches_torsion_vector() {
        let c = 1.3;
        let conn = geometries::torsion_constant(c);
        let t = torsion_tensor(&conn, &DVector::zeros(2)).unwrap();
        let a = DVector::from_vec(vec![1.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        let d = Interval::new(-1.0, 1.0).unwrap();
        // η′ = A, η″ = B.
        let eta = TwoParamMap::new(d, d, |s, t| vec![s, t]);
        let tv = torsion_vector(&connection_functional(&conn), &eta, 0.1, 0.1).unwrap();
        assert!((t.contract(&a, &b).unwrap() - tv.components).amax() < 1e-9);
    }

    #[test]
    fn non_tangent_bundle_is_rejected() {
        let conn = ConnectionField::zero(ChartSpec::new(2, 3).unwrap());
        assert!(matches!(torsion_tensor(&conn, &DVector::zeros(2)), Err(Error::TangentBundle { .. })));
        let f = connection_functional(&conn);
        assert!(matches!(torsion_vector(&f, &canonical_map(), 0.0, 0.0), Err(Error::TangentBundle { .. })));
    }
}
