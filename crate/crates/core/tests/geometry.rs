use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sojourn::geometry::*;

fn perturbed(id: ModelId, n: usize, a: f64, w: f64) -> ManifoldModel {
    make_model(&ModelSpec::new(id, n).param("a", a).param("w", w)).unwrap()
}

fn catalog() -> Vec<ManifoldModel> {
    let mut out = Vec::new();
    for n in [2, 3] {
        out.push(ManifoldModel::flat(n));
        out.push(ManifoldModel::hyperbolic(n));
        out.push(perturbed(ModelId::PerturbedScattering, n, 0.3, 0.4));
        out.push(perturbed(ModelId::PerturbedScattering, n, -0.3, 2.0));
        out.push(perturbed(ModelId::PerturbedAH, n, 0.3, 0.6));
        out.push(perturbed(ModelId::PerturbedAH, n, -0.3, 1.5));
    }
    out
}

fn random_interior(rng: &mut ChaCha8Rng, m: &ManifoldModel) -> Vec<f64> {
    match m.kind {
        GeometryKind::Scattering => (0..m.dim).map(|_| rng.gen_range(-20.0..20.0)).collect(),
        GeometryKind::AsympHyperbolic => {
            let mut z = vec![10f64.powf(rng.gen_range(-2.0..1.0))];
            z.extend((1..m.dim).map(|_| rng.gen_range(-5.0..5.0)));
            z
        }
    }
}

#[test]
fn flat_collar_is_round_sphere() {
    let m = make_model(&ModelSpec::new(ModelId::FlatEuclidean, 3)).unwrap();
    assert_eq!(m.kind, GeometryKind::Scattering);
    for (x, y) in [(0.1, [0.0, 0.0]), (0.05, [0.7, -0.4])] {
        let h = collar_metric(&m, x, &y).unwrap();
        // stereographic chart centred at e1: 4/(1+|y|²)² δ
        let c = 4.0 / (1.0 + y[0] * y[0] + y[1] * y[1]).powi(2);
        assert!((h.components[0][0] - c).abs() < 1e-14 && (h.components[1][1] - c).abs() < 1e-14);
        assert!(h.components[0][1].abs() < 1e-15);
        assert!(h.d_components[0][0][0].abs() < 1e-15);
    }
    let m2 = ManifoldModel::flat(2);
    let h = collar_metric(&m2, 0.13, &[1.2]).unwrap();
    assert_eq!(h.components[0][0], 1.0);
    assert_eq!(h.d_components[0][0][0], 0.0);
}

#[test]
fn hyperbolic_collar_is_flat() {
    let m = make_model(&ModelSpec::new(ModelId::HyperbolicHn, 3)).unwrap();
    assert_eq!(m.kind, GeometryKind::AsympHyperbolic);
    let h = collar_metric(&m, 0.3, &[1.0, -2.0]).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            assert_eq!(h.components[i][j], if i == j { 1.0 } else { 0.0 });
            assert_eq!(h.d_components[0][i][j], 0.0);
        }
    }
}

#[test]
fn perturbed_collar_value() {
    let m = perturbed(ModelId::PerturbedScattering, 2, 0.1, 1.0);
    let h = collar_metric(&m, 0.5, &[0.0]).unwrap();
    assert!((h.components[0][0] - 1.05).abs() < 1e-14);
    assert!((h.d_components[0][0][0] - 0.1).abs() < 1e-12);
}

#[test]
fn interior_examples() {
    let g = interior_metric(&ManifoldModel::flat(3), &[1.0, 2.0, 3.0]).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(g.metric.components[i][j], if i == j { 1.0 } else { 0.0 });
            for k in 0..3 {
                assert_eq!(g.christoffel[i][j][k], 0.0);
            }
        }
    }
    // half space at x = 1: Γ^x_yy = 1, Γ^y_xy = -1, Γ^x_xx = -1
    let g = interior_metric(&ManifoldModel::hyperbolic(3), &[1.0, 0.0, 0.0]).unwrap();
    assert_eq!(g.metric.components[1][1], 1.0);
    assert!((g.christoffel[0][0][0] + 1.0).abs() < 1e-14);
    assert!((g.christoffel[0][1][1] - 1.0).abs() < 1e-14);
    assert!((g.christoffel[1][0][1] + 1.0).abs() < 1e-14);
    assert!((g.christoffel[1][1][0] + 1.0).abs() < 1e-14);
}

#[test]
fn flat_transition_is_polar_change() {
    let m = ManifoldModel::flat(3);
    let chart = BoundaryChart::default_for(&m);
    let z = [0.0, 8.0, 6.0];
    let r = 10.0;
    let dr: Vec<f64> = z.iter().map(|v| v / r).collect();
    let p = CotangentPoint {
        point: ChartPoint {
            chart: Chart::Interior,
            coords: z.to_vec(),
        },
        covector: dr,
    };
    let q = chart_transition(&m, &p, &chart).unwrap();
    assert!((q.point.coords[0] - 0.1).abs() < 1e-15);
    // dr = -x⁻² dx
    assert!((q.covector[0] + 100.0).abs() < 1e-10);
    assert!(q.covector[1].abs() < 1e-12 && q.covector[2].abs() < 1e-12);
    let x = q.point.coords[0];
    assert!((x.powi(4) * q.covector[0].powi(2) - 1.0).abs() < 1e-12);
}

#[test]
fn hyperbolic_transition_is_identity() {
    let m = ManifoldModel::hyperbolic(3);
    let p = CotangentPoint {
        point: ChartPoint {
            chart: Chart::Interior,
            coords: vec![0.1, 0.5, -1.0],
        },
        covector: vec![1.0, 2.0, 3.0],
    };
    let q = chart_transition(&m, &p, &BoundaryChart::default_for(&m)).unwrap();
    assert_eq!(q.point.chart, Chart::Collar);
    assert_eq!(q.point.coords, p.point.coords);
    assert_eq!(q.covector, p.covector);
}

#[test]
fn transition_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for m in catalog() {
        let chart = BoundaryChart::default_for(&m);
        let limit = m.collar_limit();
        for _ in 0..100 {
            let x = rng.gen_range(0.01..limit);
            let mut coords = vec![x];
            coords.extend((1..m.dim).map(|_| rng.gen_range(-1.5..1.5)));
            let covector: Vec<f64> = (0..m.dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let p = CotangentPoint {
                point: ChartPoint {
                    chart: Chart::Collar,
                    coords: coords.clone(),
                },
                covector: covector.clone(),
            };
            let back = chart_transition(&m, &chart_transition(&m, &p, &chart).unwrap(), &chart).unwrap();
            for (a, b) in coords.iter().zip(&back.point.coords).chain(covector.iter().zip(&back.covector)) {
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{m:?}: {a} vs {b}");
            }
        }
    }
}

/// `z(x, y)` through the chart switch.
fn interior_of(m: &ManifoldModel, chart: &BoundaryChart, c: &[f64]) -> Vec<f64> {
    let p = CotangentPoint {
        point: ChartPoint {
            chart: Chart::Collar,
            coords: c.to_vec(),
        },
        covector: vec![0.0; m.dim],
    };
    chart_transition(m, &p, chart).unwrap().point.coords
}

#[test]
fn interior_metric_pulls_back_to_collar_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for m in catalog() {
        let n = m.dim;
        let chart = BoundaryChart::default_for(&m);
        for _ in 0..20 {
            let mut c = vec![rng.gen_range(0.02..m.collar_limit())];
            c.extend((1..n).map(|_| rng.gen_range(-1.0..1.0)));
            let z = interior_of(&m, &chart, &c);
            let g = interior_metric(&m, &z).unwrap().metric.components;
            let h = 1e-5 * c[0];
            let jac: Vec<Vec<f64>> = (0..n)
                .map(|a| {
                    let mut p = c.clone();
                    let mut q = c.clone();
                    p[a] += h;
                    q[a] -= h;
                    let (zp, zq) = (interior_of(&m, &chart, &p), interior_of(&m, &chart, &q));
                    (0..n).map(|i| (zp[i] - zq[i]) / (2.0 * h)).collect()
                })
                .collect();
            let hm = collar_metric_in(&m, &chart, c[0], &c[1..]).unwrap().components;
            let x = c[0];
            let diag = |a: usize| match (a, m.kind) {
                (0, GeometryKind::Scattering) => x.powi(-4),
                (0, GeometryKind::AsympHyperbolic) => x.powi(-2),
                _ => hm[a - 1][a - 1] / (x * x),
            };
            for a in 0..n {
                for b in 0..n {
                    let pulled: f64 = (0..n)
                        .flat_map(|i| (0..n).map(move |j| (i, j)))
                        .map(|(i, j)| jac[a][i] * g[i][j] * jac[b][j])
                        .sum();
                    let expected = match (a, b) {
                        (0, 0) => diag(0),
                        (0, _) | (_, 0) => 0.0,
                        _ => hm[a - 1][b - 1] / (x * x),
                    };
                    let scale = (diag(a) * diag(b)).sqrt();
                    assert!(
                        (pulled - expected).abs() <= 1e-8 * scale,
                        "{:?} at {c:?}: g[{a}][{b}] {pulled} vs {expected}",
                        m.model_id
                    );
                }
            }
        }
    }
}

#[test]
fn exact_curvature_constants() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (m, k) in [
        (ManifoldModel::flat(2), 0.0),
        (ManifoldModel::flat(3), 0.0),
        (ManifoldModel::hyperbolic(2), -1.0),
        (ManifoldModel::hyperbolic(3), -1.0),
    ] {
        for _ in 0..50 {
            let z = random_interior(&mut rng, &m);
            let r = curvature_operator(&m, &z).unwrap();
            let u: Vec<f64> = (0..m.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..m.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!((r.sectional(&u, &v) - k).abs() <= 1e-9);
        }
    }
}

#[test]
fn perturbed_curvature_decays_like_x_squared() {
    let m = perturbed(ModelId::PerturbedScattering, 2, 0.1, 1.0);
    let xs = [0.05, 0.07, 0.1, 0.14, 0.2];
    let ks: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let z = [0.3f64.cos() / x, 0.3f64.sin() / x];
            curvature_operator(&m, &z).unwrap().sectional(&[1.0, 0.0], &[0.0, 1.0]).abs()
        })
        .collect();
    let c = xs.iter().zip(&ks).map(|(x, k)| k / (x * x)).fold(0.0, f64::max);
    for (x, k) in xs.iter().zip(&ks) {
        assert!(*k <= c * x * x * (1.0 + 1e-12));
    }
    // the fitted constant stays bounded as x shrinks: log-log slope at least 2
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let lk: Vec<f64> = ks.iter().map(|k| k.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, lk.iter().sum::<f64>() / n);
    let slope = lx.iter().zip(&lk).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
        / lx.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
    assert!(slope >= 1.95, "slope {slope}, K {ks:?}");
}

#[test]
fn metrics_positive_definite() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for m in catalog() {
        for _ in 0..10_000 {
            let z = random_interior(&mut rng, &m);
            assert!(interior_metric(&m, &z).unwrap().metric.is_positive_definite());
            let x = rng.gen_range(0.0..m.collar_limit());
            let y: Vec<f64> = (1..m.dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            assert!(collar_metric(&m, x, &y).unwrap().is_positive_definite());
        }
    }
}

#[test]
fn perturbation_is_linear_in_amplitude() {
    let flat = ManifoldModel::flat(3);
    let z = [2.0, -1.5, 0.5];
    let g0 = interior_metric(&flat, &z).unwrap().metric.components;
    let rate = |a: f64| {
        let g = interior_metric(&perturbed(ModelId::PerturbedScattering, 3, a, 1.0), &z).unwrap();
        (g.metric.components[1][1] - g0[1][1]) / a
    };
    let (r1, r2) = (rate(1e-2), rate(1e-3));
    assert!(r1.abs() > 0.0);
    assert!((r1 - r2).abs() <= 1e-12 * r1.abs().max(1.0), "{r1} {r2}");
}

#[test]
fn catalog_rejects_bad_requests() {
    assert!(matches!(
        make_model(&ModelSpec::new(ModelId::FlatEuclidean, 4)),
        Err(sojourn::Error::ParamOutOfRange { .. })
    ));
    assert!(make_model(&ModelSpec::new(ModelId::PerturbedScattering, 2).param("a", 0.5)).is_err());
    assert!(make_model(&ModelSpec::new(ModelId::FlatEuclidean, 2).param("a", 0.1)).is_err());
    assert!(matches!("nope".parse::<ModelId>(), Err(sojourn::Error::UnknownModel(_))));
}
