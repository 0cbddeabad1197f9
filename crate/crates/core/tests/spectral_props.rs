mod common;

use std::f64::consts::PI;

use dcohinf::linalg::Vector;
use dcohinf::network::{recover_consensus_gains, SensorNetwork};
use dcohinf::quadrature::GaussLegendre;
use dcohinf::spectral::{
    eigenfunction, eigenpairs, kse_example_spec, nonlinear_galerkin, nonlinear_galerkin_quadrature,
    project_point_device,
};
use proptest::prelude::*;

use common::{published_gains, simpson, Example};

#[test]
fn eigenfunctions_are_orthonormal() {
    let quad = GaussLegendre::on_domain();
    for j in 1..=30u32 {
        for k in j..=30u32 {
            let ip = quad.integrate(|z| eigenfunction(j, z) * eigenfunction(k, z));
            let expect = if j == k { 1.0 } else { 0.0 };
            assert!((ip - expect).abs() < 1e-10, "<phi_{j}, phi_{k}> = {ip}");
        }
    }
}

#[test]
fn point_devices_match_reference_values() {
    // Reference values rounded to four digits.
    let b_u = [[-0.3316, 0.5366], [-0.5366, 0.3316]];
    let c = [[-0.5366, 0.3316], [-0.4564, -0.5366], [0.3316, 0.5366]];
    for (col, z) in [-0.2 * PI, 0.4 * PI].iter().enumerate() {
        let v = project_point_device(*z, 1.0, 2);
        for row in 0..2 {
            assert!((v[row] - b_u[row][col]).abs() <= 1e-3 / 2.0 + 1e-9);
        }
    }
    for (i, z) in [-0.6 * PI, -0.3 * PI, 0.2 * PI].iter().enumerate() {
        let v = project_point_device(*z, 1.0, 2);
        for j in 0..2 {
            assert!((v[j] - c[i][j]).abs() <= 1e-3 / 2.0 + 1e-9);
        }
    }
}

#[test]
fn point_device_matches_narrow_bump_quadrature() {
    // A normalized Gaussian bump tends to the Dirac mass; with σ = 1e-4 the
    // projection error is O(σ²) and far below 1e-10 relative to the value.
    let z0 = 0.37;
    let sigma = 1e-4;
    let bump = |z: f64| (-(z - z0).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt());
    let point = project_point_device(z0, 1.0, 5);
    for j in 1..=5u32 {
        let q = simpson(|z| bump(z) * eigenfunction(j, z), z0 - 12.0 * sigma, z0 + 12.0 * sigma, 4000);
        let tol = 1e-10 + 0.5 * (j as f64 * sigma).powi(2);
        assert!((q - point[j as usize - 1]).abs() < tol, "mode {j}: {q} vs {}", point[j as usize - 1]);
    }
}

#[test]
fn network_measurement_is_linear() {
    let ex = Example::new(12);
    let net = &ex.net;
    let nf = ex.modal.n_fast();
    let draw = |s: f64| {
        (
            Vector::from_fn(2, |i, _| s * (i as f64 + 1.3).sin()),
            Vector::from_fn(nf, |i, _| s * (0.7 * i as f64).cos()),
            (0..4).map(|i| Vector::from_element(1, s * (i as f64 - 1.5))).collect::<Vec<_>>(),
        )
    };
    let (a, b) = (draw(1.0), draw(-0.37));
    let sum = (
        &a.0 * 2.0 + &b.0 * 3.0,
        &a.1 * 2.0 + &b.1 * 3.0,
        a.2.iter().zip(&b.2).map(|(x, y)| x * 2.0 + y * 3.0).collect::<Vec<_>>(),
    );
    let (ya, _) = net.measure(&a.0, &a.1, &a.2).unwrap();
    let (yb, _) = net.measure(&b.0, &b.1, &b.2).unwrap();
    let (ys, _) = net.measure(&sum.0, &sum.1, &sum.2).unwrap();
    for i in 0..4 {
        assert!((&ys[i] - (&ya[i] * 2.0 + &yb[i] * 3.0)).abs().max() < 1e-12);
    }
}

#[test]
fn consensus_recovery_inverts_edge_scaling() {
    let ex = Example::new(4);
    let mut spec = ex.net.spec.clone();
    for (k, e) in spec.edges.iter_mut().enumerate() {
        e.weight = 0.5 + k as f64;
    }
    let net = SensorNetwork::new(spec, &ex.modal.eigen).unwrap();
    let g = published_gains(&ex.net);
    let mut scaled = g.clone();
    for ((i, j), gb) in scaled.g_bar.iter_mut() {
        *gb *= net.weight(*i, *j);
    }
    let rec = recover_consensus_gains(&scaled, &net).unwrap();
    for (key, gi) in &g.g_bar {
        assert!((&rec[key] - gi).abs().max() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigenvalues_are_ordered(instability in 0.005f64..2.0, n_total in 4usize..40) {
        let mut spec = kse_example_spec(n_total);
        spec.instability = instability;
        spec.n_slow = 1;
        if let Ok(eig) = eigenpairs(&spec) {
            for w in eig.eigenvalues.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn nonlinearity_is_energy_neutral(x in proptest::collection::vec(-10.0f64..10.0, 1..24)) {
        let ks: Vec<u32> = (1..=x.len() as u32).collect();
        let f = nonlinear_galerkin(&ks, &x);
        let dot: f64 = x.iter().zip(&f).map(|(a, b)| a * b).sum();
        let scale = 1.0 + x.iter().map(|v| v * v).sum::<f64>().powf(1.5);
        prop_assert!(dot.abs() / scale < 1e-9, "x·f = {dot}");
    }

    #[test]
    fn analytic_and_quadrature_paths_agree(dir in proptest::collection::vec(-1.0f64..1.0, 2..12), r in 0.0f64..10.0) {
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let x: Vec<f64> = dir.iter().map(|v| v / norm * r).collect();
        let ks: Vec<u32> = (1..=x.len() as u32).collect();
        let quad = GaussLegendre::on_domain();
        let a = nonlinear_galerkin(&ks, &x);
        let b = nonlinear_galerkin_quadrature(&ks, &x, &quad);
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() < 1e-8, "{u} vs {v}");
        }
    }

    #[test]
    fn slow_nonlinearity_uses_slow_modes_only(x1 in -3.0f64..3.0, x2 in -3.0f64..3.0) {
        let ex2 = Example::new(2);
        let fs = ex2.modal.slow_nonlinearity(&[x1, x2]);
        let full = nonlinear_galerkin(&[1, 2], &[x1, x2]);
        prop_assert!((fs[0] - full[0]).abs() < 1e-12 && (fs[1] - full[1]).abs() < 1e-12);
    }
}
