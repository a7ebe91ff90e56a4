//! One-step integrators for matrix-valued ODEs `dY/dτ = f(τ, Y)`.
//!
//! The adaptive scheme is the Dormand–Prince 5(4) pair with local
//! extrapolation and no dense output. A classical fixed-step RK4 is kept for
//! deterministic regression baselines.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::is_finite;

/// Integration method and tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integrator {
    Adaptive { rtol: f64, atol: f64 },
    /// Classical RK4 with (at most) step `h`; the step is shrunk so that an
    /// integer number of steps lands on the end point.
    FixedStep { h: f64 },
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator::Adaptive { rtol: 1e-9, atol: 1e-12 }
    }
}

impl Integrator {
    pub fn adaptive(rtol: f64, atol: f64) -> Self {
        Integrator::Adaptive { rtol, atol }
    }

    pub fn fixed(h: f64) -> Self {
        Integrator::FixedStep { h }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Integrator::Adaptive { rtol, atol } => rtol > 0.0 && atol > 0.0 && rtol.is_finite() && atol.is_finite(),
            Integrator::FixedStep { h } => h > 0.0 && h.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid integrator settings {self:?}")))
        }
    }
}

/// Final state plus an accumulated estimate of the absolute error.
#[derive(Debug, Clone)]
pub struct Solution {
    pub state: DMatrix<f64>,
    pub est_error: f64,
    pub steps: usize,
    pub rejected: usize,
}

const MAX_STEPS: usize = 200_000;

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate from `t0` to `t1` (either direction) starting at `y0`.
pub fn integrate<F>(mut f: F, t0: f64, t1: f64, y0: DMatrix<f64>, method: Integrator) -> Result<Solution>
where
    F: FnMut(f64, &DMatrix<f64>) -> Result<DMatrix<f64>>,
{
    method.validate()?;
    if t0 == t1 {
        return Ok(Solution { state: y0, est_error: 0.0, steps: 0, rejected: 0 });
    }
    let mut rhs = |t: f64, y: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let k = f(t, y)?;
        if !is_finite(&k) {
            return Err(Error::eval(format!("non-finite derivative at tau = {t}")));
        }
        Ok(k)
    };
    match method {
        Integrator::Adaptive { rtol, atol } => dopri5(&mut rhs, t0, t1, y0, rtol, atol),
        Integrator::FixedStep { h } => rk4(&mut rhs, t0, t1, y0, h),
    }
}

fn rk4<F>(f: &mut F, t0: f64, t1: f64, mut y: DMatrix<f64>, h_max: f64) -> Result<Solution>
where
    F: FnMut(f64, &DMatrix<f64>) -> Result<DMatrix<f64>>,
{
    let span = t1 - t0;
    let n = (span.abs() / h_max).ceil().max(1.0) as usize;
    let h = span / n as f64;
    for k in 0..n {
        let t = t0 + k as f64 * h;
        let k1 = f(t, &y)?;
        let k2 = f(t + 0.5 * h, &(&y + &k1 * (0.5 * h)))?;
        let k3 = f(t + 0.5 * h, &(&y + &k2 * (0.5 * h)))?;
        let k4 = f(t + h, &(&y + &k3 * h))?;
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(Solution { state: y, est_error: 0.0, steps: n, rejected: 0 })
}

fn error_norm(err: &DMatrix<f64>, y: &DMatrix<f64>, y_new: &DMatrix<f64>, rtol: f64, atol: f64) -> f64 {
    let mut acc = 0.0f64;
    for ((e, a), b) in err.iter().zip(y.iter()).zip(y_new.iter()) {
        let sc = atol + rtol * a.abs().max(b.abs());
        acc = acc.max((e / sc).abs());
    }
    acc
}

fn initial_step<F>(f: &mut F, t0: f64, y0: &DMatrix<f64>, k0: &DMatrix<f64>, dir: f64, span: f64, rtol: f64, atol: f64) -> Result<f64>
where
    F: FnMut(f64, &DMatrix<f64>) -> Result<DMatrix<f64>>,
{
    // Hairer–Wanner starting step heuristic.
    let scale = |y: &DMatrix<f64>, v: &DMatrix<f64>| {
        y.iter()
            .zip(v.iter())
            .map(|(y, v)| (v / (atol + rtol * y.abs())).powi(2))
            .sum::<f64>()
            .sqrt()
            / (y.len() as f64).sqrt()
    };
    let d0 = scale(y0, y0);
    let d1 = scale(y0, k0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1 = y0 + k0 * (dir * h0);
    let k1 = f(t0 + dir * h0, &y1)?;
    let d2 = scale(y0, &(k1 - k0)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    Ok((100.0 * h0).min(h1).min(span))
}

fn dopri5<F>(f: &mut F, t0: f64, t1: f64, y0: DMatrix<f64>, rtol: f64, atol: f64) -> Result<Solution>
where
    F: FnMut(f64, &DMatrix<f64>) -> Result<DMatrix<f64>>,
{
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y)?;
    let mut h = initial_step(f, t0, &y, &k1, dir, span, rtol, atol)?;
    let mut est = 0.0;
    let (mut steps, mut rejected) = (0usize, 0usize);
    let h_min = 16.0 * f64::EPSILON * t0.abs().max(t1.abs()).max(1.0);

    while (t1 - t) * dir > 0.0 {
        if steps + rejected > MAX_STEPS {
            return Err(Error::Convergence { tau: t, reason: "step budget exhausted".into() });
        }
        let remaining = (t1 - t).abs();
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        let hs = dir * h;
        let mut k: Vec<DMatrix<f64>> = Vec::with_capacity(7);
        k.push(k1.clone());
        for stage in 1..7 {
            let mut yi = y.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = A[stage][j];
                if a != 0.0 {
                    yi += kj * (hs * a);
                }
            }
            let ti = if stage == 6 && last { t1 } else { t + C[stage] * hs };
            k.push(f(ti, &yi)?);
        }
        let mut y_new = y.clone();
        let mut err = DMatrix::zeros(y.nrows(), y.ncols());
        for (i, ki) in k.iter().enumerate() {
            if B5[i] != 0.0 {
                y_new += ki * (hs * B5[i]);
            }
            let d = B5[i] - B4[i];
            if d != 0.0 {
                err += ki * (hs * d);
            }
        }
        let en = error_norm(&err, &y, &y_new, rtol, atol);
        if !en.is_finite() {
            return Err(Error::Convergence { tau: t, reason: "non-finite error estimate".into() });
        }
        if en <= 1.0 {
            t = if last { t1 } else { t + hs };
            est += err.amax();
            y = y_new;
            // FSAL: the seventh stage is the first stage of the next step.
            k1 = k.pop().expect("seven stages");
            steps += 1;
            let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            rejected += 1;
            h *= (0.9 * en.powf(-0.2)).clamp(0.1, 1.0);
            if h < h_min {
                return Err(Error::Convergence { tau: t, reason: format!("step size underflow (h = {h:e})") });
            }
        }
    }
    Ok(Solution { state: y, est_error: est, steps, rejected })
}
