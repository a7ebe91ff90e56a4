use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transport_core::flat::random_test_paths;
use transport_core::geometries::{self, Region};
use transport_core::path::ChartSpec;
use transport_core::{
    build_flat_frame, coefficients_from_zero_frame, connection_functional, flatness_certificate, holonomic_obstruction,
    loop_holonomy, residual_coefficients, transport_matrix, FlatFrameOptions, FrameField, Grid, Integrator, Interval, Path,
};

fn polar_grid() -> Grid {
    Grid::new(Region::new(vec![0.5, 0.0], vec![2.0, PI]), vec![9, 9]).unwrap()
}

fn v2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b])
}

/// The Cartesian coordinate basis written in polar components.
fn cartesian_frame(r: f64, phi: f64) -> DMatrix<f64> {
    let (s, c) = phi.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, s, -s / r, c / r])
}

fn probe_points() -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (0..25).map(|_| v2(rng.random_range(0.55..1.95), rng.random_range(0.05..3.1))).collect()
}

#[test]
fn polar_flat_frame_is_the_cartesian_basis() {
    let conn = geometries::euclidean_polar();
    let res = build_flat_frame(&conn, &v2(1.0, 0.0), &polar_grid(), &FlatFrameOptions::default()).unwrap();
    assert!(res.certificate.is_flat());
    assert!(res.residual < 1e-6, "residual {:e}", res.residual);
    for x in probe_points() {
        let a = res.frame.at_point(&x).unwrap();
        assert!((a - cartesian_frame(x[0], x[1])).amax() < 1e-8);
    }
}

#[test]
fn flat_frame_is_independent_of_axis_order() {
    let conn = geometries::euclidean_polar();
    let base = v2(1.2, 0.7);
    let opts = |order: Vec<usize>| FlatFrameOptions { axis_order: Some(order), ..Default::default() };
    let a = build_flat_frame(&conn, &base, &polar_grid(), &opts(vec![0, 1])).unwrap();
    let b = build_flat_frame(&conn, &base, &polar_grid(), &opts(vec![1, 0])).unwrap();
    let node_gap = a.nodes.frames.iter().zip(&b.nodes.frames).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max);
    assert!(node_gap < 1e-5, "{node_gap:e}");
    for x in probe_points() {
        assert!((a.frame.at_point(&x).unwrap() - b.frame.at_point(&x).unwrap()).amax() < 1e-5);
    }
}

#[test]
fn loops_in_a_flat_region_have_trivial_holonomy() {
    let f = connection_functional(&geometries::euclidean_polar());
    for (c0, c1, a0, a1) in [(1.2, 1.5, 0.4, 1.0), (1.0, 0.8, 0.3, 0.6), (1.5, 2.0, 0.2, 0.9)] {
        let p = Path::new(Interval::new(0.0, 2.0 * PI).unwrap(), move |s| vec![c0 + a0 * s.cos(), c1 + a1 * (2.0 * s).sin()])
            .with_velocity(move |s| vec![-a0 * s.sin(), 2.0 * a1 * (2.0 * s).cos()]);
        let h = loop_holonomy(&f, &p, Integrator::default()).unwrap();
        assert!((h.matrix - DMatrix::identity(2, 2)).amax() < 1e-6);
    }
}

#[test]
fn flat_frames_differ_by_a_constant_matrix() {
    let conn = geometries::euclidean_polar();
    let a = build_flat_frame(&conn, &v2(1.0, 0.0), &polar_grid(), &FlatFrameOptions::default()).unwrap();
    let b = build_flat_frame(&conn, &v2(1.7, 2.5), &polar_grid(), &FlatFrameOptions::default()).unwrap();
    let pts = probe_points();
    let c = |x: &DVector<f64>| a.frame.inverse_along(&Path::segment(x.clone(), x.clone()), 0.0).unwrap() * b.frame.at_point(x).unwrap();
    let c0 = c(&pts[0]);
    for x in &pts[1..] {
        assert!((c(x) - &c0).amax() < 1e-6);
    }
}

fn random_frame(rng: &mut ChaCha8Rng) -> FrameField {
    let k: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    FrameField::on_chart(move |x| {
        DMatrix::from_row_slice(
            2,
            2,
            &[
                2.0 + 0.4 * (k[0] * x[0] + k[1] * x[1]).sin(),
                0.4 * (k[2] * x[0] * x[1]).cos(),
                0.4 * (k[3] * x[1] + k[4]).sin(),
                2.0 + 0.4 * (k[5] * x[0] * x[0] + k[6] * x[1] + k[7]).cos(),
            ],
        )
    })
}

#[test]
fn zero_frame_connections_are_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = Grid::new(Region::new(vec![-1.0, -1.0], vec![1.0, 1.0]), vec![7, 7]).unwrap();
    for _ in 0..5 {
        let conn = coefficients_from_zero_frame(&random_frame(&mut rng), ChartSpec::tangent(2).unwrap()).unwrap();
        let cert = flatness_certificate(&conn, &grid, None).unwrap();
        assert!(cert.max_curvature_norm < 1e-5, "{:e}", cert.max_curvature_norm);
    }
}

#[test]
fn flat_frame_recovers_the_generating_frame() {
    // The frame built from p is F(x)·F(p)⁻¹.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let frame = random_frame(&mut rng);
    let conn = coefficients_from_zero_frame(&frame, ChartSpec::tangent(2).unwrap()).unwrap();
    let grid = Grid::new(Region::new(vec![-1.0, -1.0], vec![1.0, 1.0]), vec![7, 7]).unwrap();
    let base = v2(0.1, -0.2);
    let res = build_flat_frame(&conn, &base, &grid, &FlatFrameOptions { test_paths: 6, samples_per_path: 5, ..Default::default() }).unwrap();
    let fp_inv = frame.at_point(&base).unwrap().try_inverse().unwrap();
    for x in [v2(0.5, 0.5), v2(-0.8, 0.3), v2(0.0, -0.9)] {
        let expected = frame.at_point(&x).unwrap() * &fp_inv;
        assert!((res.frame.at_point(&x).unwrap() - expected).amax() < 1e-6);
    }
    assert!(res.residual < 1e-5, "{:e}", res.residual);
    // The generating frame itself has vanishing coefficients along paths.
    let paths = random_test_paths(&grid.region, 4, 2);
    assert!(residual_coefficients(&conn, &frame, &paths, 5).unwrap() < 1e-8);
}

#[test]
fn curved_connection_is_refused() {
    let grid = Grid::new(Region::new(vec![0.5, 0.0], vec![2.5, 3.0]), vec![6, 6]).unwrap();
    let r = build_flat_frame(&geometries::sphere(), &v2(1.0, 1.0), &grid, &FlatFrameOptions::default());
    assert!(matches!(r, Err(transport_core::error::Error::FlatnessViolation { .. })));
}

#[test]
fn symmetric_flat_frame_is_holonomic() {
    let conn = geometries::euclidean_polar();
    let res = build_flat_frame(&conn, &v2(1.0, 0.0), &polar_grid(), &FlatFrameOptions::default()).unwrap();
    for x in probe_points().iter().take(8) {
        let ob = holonomic_obstruction(&conn, &res.frame, x, 1e-5).unwrap();
        assert!(ob.max_norm < 1e-5, "{:e}", ob.max_norm);
        assert!(ob.torsion_max < 1e-12);
    }
}

#[test]
fn torsionful_flat_frame_is_not_holonomic() {
    let conn = geometries::gauge_rotation();
    let grid = Grid::new(Region::new(vec![-1.0, -1.0], vec![1.0, 1.0]), vec![7, 7]).unwrap();
    let res = build_flat_frame(&conn, &v2(0.0, 0.0), &grid, &FlatFrameOptions::default()).unwrap();
    assert!(res.residual < 1e-6);
    let x = v2(0.3, -0.4);
    let built = holonomic_obstruction(&conn, &res.frame, &x, 1e-5).unwrap();
    assert!(built.max_norm > 0.1);
    assert!(built.torsion_max > 0.1);
    let analytic = holonomic_obstruction(&conn, &geometries::gauge_rotation_frame(), &x, 1e-5).unwrap();
    assert!((built.max_norm - analytic.max_norm).abs() < 1e-5);
    assert!((analytic.max_norm - 1.0).abs() < 1e-12);
}

#[test]
fn transports_are_identity_in_the_flat_frame() {
    let conn = geometries::euclidean_polar();
    let res = build_flat_frame(&conn, &v2(1.0, 0.0), &polar_grid(), &FlatFrameOptions::default()).unwrap();
    let f = connection_functional(&conn).transformed(&res.frame);
    let p = Path::new(Interval::new(0.0, 1.0).unwrap(), |s| vec![0.7 + s, 0.3 + 2.0 * s * s]).with_velocity(|s| vec![1.0, 4.0 * s]);
    let h = transport_matrix(&f, &p, 0.0, 1.0, Integrator::default()).unwrap();
    assert!((h.matrix - DMatrix::identity(2, 2)).amax() < 1e-6);
}
