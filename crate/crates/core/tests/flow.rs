mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sojourn::flow::*;
use sojourn::geometry::*;

fn unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let l = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if l > 0.1 && l <= 1.0 {
            return v.iter().map(|a| a / l).collect();
        }
    }
}

#[test]
fn flat_tangent_line() {
    let m = ManifoldModel::flat(3);
    let path = integrate_geodesic(&m, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &FlowOptions::default()).unwrap();
    assert_eq!(path.status, PathStatus::ReachedBoundary);
    let lim = boundary_limits(&m, &path).unwrap();
    assert!(lim.s.abs() < 1e-9);
    assert!((lim.y[0]).abs() < 1e-9 && (lim.y[1] - 1.0).abs() < 1e-9 && lim.y[2].abs() < 1e-9);
    let eta: f64 = lim.eta.iter().map(|e| e * e).sum::<f64>().sqrt();
    assert!((eta - 1.0).abs() < 1e-8, "|η| = {eta}");
}

#[test]
fn flat_radial_line() {
    let m = ManifoldModel::flat(3);
    let theta = [0.0, 0.6, 0.8];
    let z: Vec<f64> = theta.iter().map(|t| 2.0 * t).collect();
    let lim = sojourn_limit(&m, &z, &theta, &FlowOptions::default()).unwrap();
    assert!((lim.s + 2.0).abs() < 1e-9);
    assert!(lim.eta.iter().all(|e| e.abs() < 1e-9));
}

#[test]
fn euclidean_grid_exact() {
    let flow = FlowOptions::default();
    for n in [2, 3] {
        let m = ManifoldModel::flat(n);
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let zs: Vec<Vec<f64>> = (0..10).map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let ts: Vec<Vec<f64>> = (0..10).map(|_| unit(&mut rng, n)).collect();
        for z in &zs {
            for t in &ts {
                let lim = sojourn_limit(&m, z, t, &flow).unwrap();
                assert!((lim.s - common::flat_sojourn(z, t)).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn hyperbolic_vertical() {
    let m = ManifoldModel::hyperbolic(3);
    let path = integrate_geodesic(&m, &[1.0, 0.0, 0.0], &[-1.0, 0.0, 0.0], &FlowOptions::default()).unwrap();
    assert_eq!(path.status, PathStatus::ReachedBoundary);
    let lim = boundary_limits(&m, &path).unwrap();
    assert!(lim.s.abs() < 1e-10);
    assert!(lim.y.iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn hyperbolic_semicircle_log2() {
    // top of the unit semicircle centred at y = (-1, 0)
    let m = ManifoldModel::hyperbolic(3);
    let lim = sojourn_limit(&m, &[1.0, -1.0, 0.0], &[0.0, 1.0, 0.0], &FlowOptions::default()).unwrap();
    assert!(lim.y[0].abs() < 1e-9 && lim.y[1].abs() < 1e-9, "{:?}", lim.y);
    assert!((lim.s - 2f64.ln()).abs() < 1e-9);
}

#[test]
fn perturbed_scattering_not_trapped() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let flow = FlowOptions::default();
    for (n, w) in [(2, 0.4), (3, 0.6)] {
        for a in [0.3, -0.3] {
            let m = make_model(&ModelSpec::new(ModelId::PerturbedScattering, n).param("a", a).param("w", w)).unwrap();
            for _ in 0..64 {
                let z: Vec<f64> = unit(&mut rng, n).iter().map(|v| v * rng.gen_range(0.0..1.0)).collect();
                let dir = unit_covector(&m, &z, &unit(&mut rng, n)).unwrap();
                let path = integrate_geodesic(&m, &z, &dir, &flow).unwrap();
                assert_eq!(path.status, PathStatus::ReachedBoundary);
            }
        }
    }
}

#[test]
fn conservation_and_transversality() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let flow = FlowOptions::default();
    let models = [
        make_model(&ModelSpec::new(ModelId::PerturbedScattering, 3).param("a", 0.3).param("w", 0.5)).unwrap(),
        make_model(&ModelSpec::new(ModelId::PerturbedAH, 3).param("a", -0.3).param("w", 0.8)).unwrap(),
        ManifoldModel::hyperbolic(2),
    ];
    for m in &models {
        for _ in 0..30 {
            let z: Vec<f64> = match m.kind {
                GeometryKind::Scattering => unit(&mut rng, m.dim).iter().map(|v| 3.0 * v).collect(),
                GeometryKind::AsympHyperbolic => {
                    let mut z = vec![rng.gen_range(0.3..2.0)];
                    z.extend((1..m.dim).map(|_| rng.gen_range(-1.0..1.0)));
                    z
                }
            };
            let dir = unit_covector(m, &z, &unit(&mut rng, m.dim)).unwrap();
            let path = integrate_geodesic(m, &z, &dir, &flow).unwrap();
            assert!(path.p_drift(m) <= 1e-8);
            assert!(path.sigma_drift() <= 1e-10);
            assert!(path.speed_drift() <= 1e-8);
            let rate = path.exit_rate(m).unwrap();
            assert!(rate <= -1.0, "dx/dparam at the boundary {rate}");
        }
    }
}

/// `x⁻¹ dy/dx` along the collar approaches `η/σ` at first order.
#[test]
fn ah_fibre_limit_law() {
    let models = [
        ManifoldModel::hyperbolic(3),
        make_model(&ModelSpec::new(ModelId::PerturbedAH, 3).param("a", 0.2).param("w", 0.7)).unwrap(),
    ];
    for m in &models {
        let z = [0.8, -0.3, 0.2];
        let dir = unit_covector(m, &z, &[-0.6, 0.64, 0.48]).unwrap();
        let path = integrate_geodesic(m, &z, &dir, &FlowOptions::default()).unwrap();
        let lim = boundary_limits(m, &path).unwrap();
        let x0 = m.collar_x0;
        let mut errs = Vec::new();
        for k in 1..=5 {
            let xk = x0 / 2f64.powi(k);
            let p = path.collar_param_at_x(xk).unwrap();
            let d = 1e-6 * xk;
            let (a, b) = (path.collar_packed_at(p - d).unwrap(), path.collar_packed_at(p + d).unwrap());
            let dx = b[0] - a[0];
            let err = (0..2)
                .map(|j| ((b[1 + j] - a[1 + j]) / dx / xk - lim.eta[j] / lim.sigma).abs())
                .fold(0.0, f64::max);
            errs.push((xk, err));
        }
        if errs.iter().all(|(_, e)| *e < 1e-7) {
            continue;
        }
        for w in errs[2..].windows(2) {
            let slope = (w[0].1 / w[1].1).ln() / 2f64.ln();
            assert!(slope >= 0.9, "{:?}: {errs:?}", m.model_id);
        }
    }
}

#[test]
fn trapped_status_is_reported_for_tiny_budgets() {
    let m = ManifoldModel::flat(2);
    let opts = FlowOptions {
        max_time: 0.5,
        ..FlowOptions::default()
    };
    let path = integrate_geodesic(&m, &[0.0, 0.0], &[1.0, 0.0], &opts).unwrap();
    assert_eq!(path.status, PathStatus::MaxTime);
    assert!(matches!(boundary_limits(&m, &path), Err(sojourn::Error::NotAtBoundary(_))));
}
