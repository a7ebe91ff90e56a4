use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Maximum absolute row sum.
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn is_finite(a: &DMatrix<f64>) -> bool {
    a.iter().all(|x| x.is_finite())
}

pub(crate) fn check_square(a: &DMatrix<f64>, dim: usize) -> Result<()> {
    if a.nrows() != dim {
        return Err(Error::Shape { expected: dim, got: a.nrows() });
    }
    if a.ncols() != dim {
        return Err(Error::Shape { expected: dim, got: a.ncols() });
    }
    Ok(())
}

pub(crate) fn check_len(v: &DVector<f64>, dim: usize) -> Result<()> {
    if v.len() == dim {
        Ok(())
    } else {
        Err(Error::Shape { expected: dim, got: v.len() })
    }
}

/// Bounds on `|det A|` for frames considered nondegenerate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for DetBounds {
    fn default() -> Self {
        Self { min: 1e-12, max: 1e12 }
    }
}

/// Inverse of `a` after checking `|det a|` against `bounds` and the
/// reconstruction residual `‖a·a⁻¹ − I‖∞`.
pub fn checked_inverse(a: &DMatrix<f64>, bounds: DetBounds) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Invertibility(format!(
            "{}x{} matrix is not square",
            a.nrows(),
            a.ncols()
        )));
    }
    if !is_finite(a) {
        return Err(Error::Invertibility("matrix has non-finite entries".into()));
    }
    let lu = a.clone().lu();
    let det = lu.determinant().abs();
    if !(det >= bounds.min && det <= bounds.max) {
        return Err(Error::Invertibility(format!(
            "|det| = {det:e} outside [{:e}, {:e}]",
            bounds.min, bounds.max
        )));
    }
    let inv = lu
        .try_inverse()
        .ok_or_else(|| Error::Invertibility("LU inverse failed".into()))?;
    let n = a.nrows();
    let resid = inf_norm(&(a * &inv - DMatrix::identity(n, n)));
    // Residual is relative to the conditioning of `a`.
    let scale = (inf_norm(a) * inf_norm(&inv)).max(1.0);
    if resid > 1e-12 * scale {
        return Err(Error::Invertibility(format!("inverse residual {resid:e}")));
    }
    Ok(inv)
}
