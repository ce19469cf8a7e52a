use num_complex::Complex64;
use proptest::prelude::*;
use sojourn::flow::*;
use sojourn::geometry::*;
use sojourn::poisson::*;

fn dir2(t: f64) -> [f64; 2] {
    [t.cos(), t.sin()]
}

fn phase_trace(s: f64, c: Complex64, grid: LambdaGrid) -> KernelTrace {
    KernelTrace {
        grid,
        values: (0..grid.len).map(|k| c * Complex64::from_polar(1.0, grid.at(k) * s)).collect(),
        convention: Convention {
            kind: GeometryKind::Scattering,
            n: 2,
            prefactor: Prefactor::ScatteringPoisson,
        },
        mollifier: None,
        branches: Vec::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn covector_scaling(a in 0.05f64..0.3, r in 0.0f64..1.5, phi in 0.0f64..6.28, t in 0.0f64..6.28, c in 0.1f64..10.0) {
        let m = make_model(&ModelSpec::new(ModelId::PerturbedScattering, 2).param("a", a).param("w", 0.5)).unwrap();
        let z = [r * phi.cos(), r * phi.sin()];
        let zeta = unit_covector(&m, &z, &dir2(t)).unwrap();
        let flow = FlowOptions::default();
        let l1 = sojourn_limit(&m, &z, &zeta, &flow).unwrap();
        let scaled: Vec<f64> = zeta.iter().map(|v| c * v).collect();
        let lc = sojourn_limit(&m, &z, &scaled, &flow).unwrap();
        prop_assert!((lc.s - l1.s).abs() <= 1e-12 * (1.0 + l1.s.abs()));
        prop_assert!((lc.sigma - c * l1.sigma).abs() <= 1e-12 * c);
        for (p, q) in lc.eta.iter().zip(&l1.eta) {
            prop_assert!((p - c * q).abs() <= 1e-11 * c);
        }
        for (p, q) in lc.y.iter().zip(&l1.y) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn flat_rotation_invariance(x in -2.0f64..2.0, y in -2.0f64..2.0, t in 0.0f64..6.28, rot in 0.0f64..6.28) {
        let m = ManifoldModel::flat(2);
        let flow = FlowOptions::default();
        let (c, s) = (rot.cos(), rot.sin());
        let r = |v: &[f64]| vec![c * v[0] - s * v[1], s * v[0] + c * v[1]];
        let th = dir2(t);
        let a = sojourn_limit(&m, &[x, y], &th, &flow).unwrap();
        let b = sojourn_limit(&m, &r(&[x, y]), &r(&th), &flow).unwrap();
        prop_assert!((a.s - b.s).abs() < 1e-9);
        let ry = r(&a.y);
        prop_assert!((ry[0] - b.y[0]).abs() < 1e-9 && (ry[1] - b.y[1]).abs() < 1e-9);
    }

    #[test]
    fn hyperbolic_translation_invariance(x in 0.3f64..2.0, y in -1.0f64..1.0, t in 0.1f64..3.0, shift in -3.0f64..3.0) {
        let m = ManifoldModel::hyperbolic(2);
        let flow = FlowOptions::default();
        let u = [-t.sin(), t.cos()];
        let a = sojourn_limit(&m, &[x, y], &unit_covector(&m, &[x, y], &u).unwrap(), &flow).unwrap();
        let b = sojourn_limit(&m, &[x, y + shift], &unit_covector(&m, &[x, y + shift], &u).unwrap(), &flow).unwrap();
        prop_assert!((a.s - b.s).abs() < 1e-8);
        prop_assert!((a.y[0] + shift - b.y[0]).abs() < 1e-8);
    }

    #[test]
    fn negative_frequencies_are_conjugate(s in -5.0f64..5.0, j in 0.01f64..10.0, k in 0usize..4, lam in 0.1f64..500.0, n in 2usize..4, ah in any::<bool>()) {
        let c = Convention {
            kind: if ah { GeometryKind::AsympHyperbolic } else { GeometryKind::Scattering },
            n,
            prefactor: if ah { Prefactor::AhEisenstein } else { Prefactor::ScatteringPoisson },
        };
        let p = amplitude_from_data(s, j, k, lam, &c).unwrap();
        let q = amplitude_from_data(s, j, k, -lam, &c).unwrap();
        prop_assert!((p - q.conj()).norm() <= 1e-15 * p.norm());
    }

    #[test]
    fn mollification_is_linear(s1 in -3.0f64..3.0, s2 in -3.0f64..3.0, ar in -2.0f64..2.0, ai in -2.0f64..2.0, b in -2.0f64..2.0, w in 0.5f64..4.0) {
        let grid = LambdaGrid::uniform(10.0, 110.0, 2048).unwrap();
        let (ca, cb) = (Complex64::new(ar, ai), Complex64::new(b, 0.0));
        let t1 = phase_trace(s1, Complex64::new(1.0, 0.0), grid);
        let t2 = phase_trace(s2, Complex64::new(1.0, 0.0), grid);
        let mut sum = t1.clone();
        for (k, v) in sum.values.iter_mut().enumerate() {
            *v = ca * t1.values[k] + cb * t2.values[k];
        }
        let m = Mollifier::new(w).unwrap();
        let (m1, m2, ms) = (mollify(&t1, &m).unwrap(), mollify(&t2, &m).unwrap(), mollify(&sum, &m).unwrap());
        let scale = 1.0 + ca.norm() + cb.norm();
        for k in 0..grid.len {
            let lin = ca * m1.values[k] + cb * m2.values[k];
            prop_assert!((ms.values[k] - lin).norm() <= 1e-12 * scale);
        }
    }
}
