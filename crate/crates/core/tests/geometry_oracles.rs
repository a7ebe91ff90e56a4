use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI, TAU};

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use transport_core::geometries;
use transport_core::transport::{angle_difference, rotation_angle};
use transport_core::{
    contraction_discrepancy, connection_functional, curvature_matrix, curvature_tensor, loop_holonomy_periodic, torsion_tensor,
    torsion_vector, Integrator, Interval, Path, TwoParamMap,
};

fn latitude(theta0: f64) -> Path {
    Path::new(Interval::new(0.0, TAU).unwrap(), move |s| vec![theta0, s]).with_velocity(|_| vec![0.0, 1.0])
}

/// Parallel transport of `v` once around the latitude `θ0`, written out
/// component by component and stepped with a hand-rolled RK4.
fn latitude_transport_oracle(theta0: f64, v: [f64; 2], steps: usize) -> [f64; 2] {
    let (sn, cs) = theta0.sin_cos();
    let rhs = |v: [f64; 2]| [sn * cs * v[1], -(cs / sn) * v[0]];
    let h = TAU / steps as f64;
    let mut y = v;
    for _ in 0..steps {
        let k1 = rhs(y);
        let k2 = rhs([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = rhs([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = rhs([y[0] + h * k3[0], y[1] + h * k3[1]]);
        for i in 0..2 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

#[test]
fn sphere_latitude_holonomy() {
    let theta0 = FRAC_PI_3;
    let f = connection_functional(&geometries::sphere());
    let h = loop_holonomy_periodic(&f, &latitude(theta0), &[None, Some(TAU)], Integrator::default()).unwrap();
    let metric = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, theta0.sin().powi(2)]));
    let angle = rotation_angle(&h, &metric).unwrap();
    let closed_form = TAU * theta0.cos();
    assert!(angle_difference(angle.abs(), closed_form).abs() < 1e-4, "angle {angle}");

    // Independent oracle: columns of the holonomy from a separate integration.
    for (col, v) in [[1.0, 0.0], [0.0, 1.0]].into_iter().enumerate() {
        let w = latitude_transport_oracle(theta0, v, 20_000);
        for i in 0..2 {
            assert!((h.matrix[(i, col)] - w[i]).abs() < 1e-8);
        }
    }
}

#[test]
fn sphere_holonomy_angle_over_latitudes() {
    let f = connection_functional(&geometries::sphere());
    for theta0 in [0.4, 0.9, 1.3, 2.2] {
        let h = loop_holonomy_periodic(&f, &latitude(theta0), &[None, Some(TAU)], Integrator::default()).unwrap();
        let metric = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, theta0.sin().powi(2)]));
        let angle = rotation_angle(&h, &metric).unwrap();
        // The sense of rotation is convention dependent; the magnitude is not.
        let d = angle_difference(angle, TAU * theta0.cos()).abs().min(angle_difference(angle, -TAU * theta0.cos()).abs());
        assert!(d < 1e-6, "theta0 {theta0}: {angle}");
    }
}

#[test]
fn sphere_curvature_magnitude() {
    for theta in [0.5, 1.0, FRAC_PI_2] {
        let x = DVector::from_vec(vec![theta, 0.3]);
        let t = curvature_tensor(&geometries::sphere(), &x, None).unwrap();
        // R^θ_{.φθφ}
        assert!((t.get(0, 1, 0, 1).abs() - theta.sin().powi(2)).abs() < 1e-5);
        assert_eq!(t.get(0, 1, 0, 1), -t.get(0, 1, 1, 0));
    }
}

#[test]
fn contraction_identity_on_sphere_and_polar() {
    let d = Interval::new(0.0, 1.0).unwrap();
    let eta = TwoParamMap::new(d, d, |s, t| vec![0.8 + 0.5 * s + 0.2 * t * t, 0.3 + s * t + 0.7 * t])
        .with_partials(|_, t| vec![0.5, t], |s, t| vec![0.4 * t, s + 0.7]);
    let samples: Vec<(f64, f64)> = [0.2, 0.5, 0.8].iter().flat_map(|&s| [0.2, 0.5, 0.8].map(|t| (s, t))).collect();
    for conn in [geometries::sphere(), geometries::euclidean_polar(), geometries::sphere().without_partials()] {
        let d = contraction_discrepancy(&conn, &eta, &samples).unwrap();
        assert!(d < 1e-5, "{d:e}");
    }
}

#[test]
fn curvature_matrix_is_antisymmetric_in_parameters() {
    let f = connection_functional(&geometries::sphere());
    let d = Interval::new(0.0, 1.0).unwrap();
    let eta = TwoParamMap::new(d, d, |s, t| vec![0.9 + 0.4 * s * t, s - t * t]);
    let r = curvature_matrix(&f, &eta, 0.4, 0.6, None).unwrap();
    let rt = curvature_matrix(&f, &eta.transposed(), 0.6, 0.4, None).unwrap();
    assert!((&r.matrix + &rt.matrix).amax() < 1e-6);
    assert!(r.est_error < 1e-6);
}

#[test]
fn torsion_of_constant_connection_on_canonical_map() {
    let d = Interval::new(-1.0, 1.0).unwrap();
    let eta = TwoParamMap::new(d, d, |s, t| vec![t, s]);
    for c in [-2.0, 0.3, 1.0] {
        let f = connection_functional(&geometries::torsion_constant(c));
        for (s, t) in [(0.0, 0.0), (0.4, -0.7), (-0.9, 0.9)] {
            let tv = torsion_vector(&f, &eta, s, t).unwrap();
            assert!((tv.components[0] - c).abs() < 1e-9);
            assert!(tv.components[1].abs() < 1e-9);
        }
    }
    let gauge = torsion_tensor(&geometries::gauge_rotation(), &DVector::zeros(2)).unwrap();
    assert!(gauge.max_abs() > 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn symmetric_connections_are_torsion_free(c in prop::array::uniform6(-1.0f64..1.0), s in 0.1f64..0.9, t in 0.1f64..0.9) {
        // A random C² map kept inside the working regions of both charts.
        let d = Interval::new(0.0, 1.0).unwrap();
        let eta = TwoParamMap::new(d, d, move |s, t| vec![
            1.2 + 0.3 * (c[0] * s + c[1] * t).sin() + 0.1 * c[2] * s * t,
            1.5 + 0.5 * (c[3] * s * s + c[4] * t).cos() + 0.2 * c[5] * t,
        ]);
        for conn in [geometries::sphere(), geometries::euclidean_polar(), geometries::euclidean_cartesian()] {
            let tv = torsion_vector(&connection_functional(&conn), &eta, s, t).unwrap();
            prop_assert!(tv.components.amax() < 1e-7);
        }
    }

    #[test]
    fn torsion_swaps_sign_with_parameters(s in -0.8f64..0.8, t in -0.8f64..0.8, c in -2.0f64..2.0) {
        let d = Interval::new(-1.0, 1.0).unwrap();
        let eta = TwoParamMap::new(d, d, |s, t| vec![s + 0.3 * t * t, t - 0.2 * s * t]);
        let f = connection_functional(&geometries::torsion_constant(c));
        let a = torsion_vector(&f, &eta, s, t).unwrap();
        let b = torsion_vector(&f, &eta.transposed(), t, s).unwrap();
        prop_assert!((a.components + b.components).amax() < 1e-9);
    }

    #[test]
    fn curvature_tensor_antisymmetry(th in 0.3f64..(PI - 0.3), ph in 0.0f64..TAU) {
        let t = curvature_tensor(&geometries::sphere(), &DVector::from_vec(vec![th, ph]), None).unwrap();
        for i in 0..2 { for j in 0..2 { for a in 0..2 { for b in 0..2 {
            prop_assert_eq!(t.get(i, j, a, b), -t.get(i, j, b, a));
        }}}}
    }
}
