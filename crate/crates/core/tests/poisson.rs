mod common;

use num_complex::Complex64;
use rustfft::FftPlanner;
use sojourn::geometry::*;
use sojourn::poisson::*;
use sojourn::sojourn::*;
use std::f64::consts::PI;

fn phase_trace(s: f64, grid: LambdaGrid) -> KernelTrace {
    KernelTrace {
        grid,
        values: (0..grid.len).map(|k| Complex64::from_polar(1.0, grid.at(k) * s)).collect(),
        convention: Convention {
            kind: GeometryKind::Scattering,
            n: 2,
            prefactor: Prefactor::ScatteringPoisson,
        },
        mollifier: None,
        branches: Vec::new(),
    }
}

fn interior(t: &KernelTrace, margin: f64) -> std::ops::Range<usize> {
    let lo = (margin / t.grid.step).ceil() as usize;
    lo..t.grid.len - lo
}

#[test]
fn amplitude_examples() {
    let c = Convention {
        kind: GeometryKind::Scattering,
        n: 3,
        prefactor: Prefactor::ScatteringPoisson,
    };
    let a0 = amplitude_from_data(0.4, 1.0, 0, 12.0, &c).unwrap();
    assert!((a0.norm() - 12.0 / (2.0 * PI)).abs() < 1e-13);
    assert!((amplitude_from_data(0.4, 1.0, 1, 12.0, &c).unwrap() - Complex64::i() * a0).norm() < 1e-14);
    assert!((amplitude_from_data(0.4, 4.0, 0, 12.0, &c).unwrap() - 0.5 * a0).norm() < 1e-14);
    assert!((amplitude_from_data(0.4, 1.0, 2, 12.0, &c).unwrap() + a0).norm() < 1e-14);
    assert!(amplitude_from_data(0.4, -1.0, 0, 12.0, &c).is_err());
    assert!(amplitude_from_data(0.4, 1.0, 0, 0.0, &c).is_err());
}

#[test]
fn oracle_examples() {
    let v = euclidean_oracle(&[0.0, 0.0], &[1.0, 0.0], 2.0 * PI, 2);
    assert!((v - Complex64::i().sqrt()).norm() < 1e-14);
    let v = euclidean_oracle(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0], 2.0 * PI, 3);
    assert!((v - Complex64::i()).norm() < 1e-13);
    assert_eq!(h3_oracle_phase(&[1.0, 0.0, 0.0], &[0.0, 0.0]), 0.0);
    assert!((h3_oracle_phase(&[1.0, -1.0, 0.0], &[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn flat_synthesis_matches_exact_kernel() {
    let m = ManifoldModel::flat(3);
    let (z, y) = ([0.3, -0.7, 1.1], [0.0, 0.6, 0.8]);
    let grid = LambdaGrid::uniform(10.0, 100.0, 4096).unwrap();
    let t = synthesize_trace(&m, &z, &y, &grid, &Convention::for_model(&m), &SearchOptions::default()).unwrap();
    let exact: Vec<Complex64> = grid.points().iter().map(|&l| common::flat_kernel(&z, &y, l).conj()).collect();
    assert!(common::rel_l2(&t.values, &exact) < 1e-9);
    let (_, e) = trace_fits(&t, 0..grid.len);
    assert!((e - 1.0).abs() < 1e-9);
}

#[test]
fn hermitian_on_symmetric_grid() {
    let m = ManifoldModel::flat(2);
    let set = find_branches(&m, &[0.5, 0.2], &[0.0, 1.0], &SearchOptions::default()).unwrap();
    let grid = LambdaGrid::uniform(-50.0, 50.0, 1000).unwrap();
    let t = synthesize_from_branches(&set, &grid, &Convention::for_model(&m)).unwrap();
    assert!(t.is_hermitian(1e-12));
    for k in 0..grid.len {
        assert!((t.values[k] - t.values[grid.len - 1 - k].conj()).norm() < 1e-12);
    }
}

#[test]
fn two_branches_beat_at_their_sojourn_times() {
    let c = Convention {
        kind: GeometryKind::Scattering,
        n: 2,
        prefactor: Prefactor::ScatteringPoisson,
    };
    let (s1, s2) = (0.8, 2.3);
    let n = 1 << 16;
    let grid = LambdaGrid::uniform(10.0, 2010.0, n).unwrap();
    let mut buf: Vec<Complex64> = (0..n)
        .map(|k| {
            let l = grid.at(k);
            let hann = (PI * k as f64 / (n - 1) as f64).sin().powi(2);
            let v = amplitude_from_data(s1, 1.0, 0, l, &c).unwrap() + amplitude_from_data(s2, 2.0, 1, l, &c).unwrap();
            v * hann / l.sqrt()
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let ds = 2.0 * PI / (n as f64 * grid.step);
    let mags: Vec<f64> = buf.iter().map(|v| v.norm()).collect();
    let mut peaks: Vec<usize> = (1..n / 2).filter(|&j| mags[j] > mags[j - 1] && mags[j] >= mags[j + 1]).collect();
    peaks.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]));
    let mut found: Vec<f64> = peaks[..2].iter().map(|&j| j as f64 * ds).collect();
    found.sort_by(f64::total_cmp);
    assert!((found[0] - s1).abs() <= 2.0 * ds && (found[1] - s2).abs() <= 2.0 * ds, "{found:?}");
}

#[test]
fn mollifier_suppresses_phases_outside_its_support() {
    let grid = LambdaGrid::uniform(10.0, 2010.0, 1 << 16).unwrap();
    let t = phase_trace(2.0, grid);
    let narrow = mollify(&t, &Mollifier::new(1.0).unwrap()).unwrap();
    // the λ-side kernel has Gevrey tails, so the truncation edges leak over a long range
    for k in interior(&t, 300.0) {
        assert!(narrow.values[k].norm() < 1e-6, "{k}: {}", narrow.values[k]);
    }
    let wide_m = Mollifier::new(3.0).unwrap();
    let wide = mollify(&t, &wide_m).unwrap();
    let w2 = wide_m.profile(2.0);
    for k in interior(&t, 300.0) {
        assert!((wide.values[k] - w2 * t.values[k]).norm() < 1e-6 * w2);
    }
}

#[test]
fn wide_mollifier_recovers_trace_up_to_normalization() {
    let grid = LambdaGrid::uniform(10.0, 1010.0, 1 << 15).unwrap();
    let t = phase_trace(2.0, grid);
    let mut errs = Vec::new();
    for w in [20.0, 40.0, 80.0] {
        let m = Mollifier::new(w).unwrap();
        let v = mollify(&t, &m).unwrap();
        let r = m.profile(0.0);
        let e = interior(&t, 50.0)
            .map(|k| (v.values[k] / r - t.values[k]).norm())
            .fold(0.0, f64::max);
        errs.push(e);
    }
    assert!(errs[1] < 0.3 * errs[0] && errs[2] < 0.3 * errs[1], "{errs:?}");
}

#[test]
fn fft_and_direct_mollification_agree() {
    let m = ManifoldModel::flat(2);
    let set = find_branches(&m, &[0.5, 0.2], &[0.6, 0.8], &SearchOptions::default()).unwrap();
    let grid = LambdaGrid::uniform(10.0, 110.0, 2048).unwrap();
    let t = synthesize_from_branches(&set, &grid, &Convention::for_model(&m)).unwrap();
    let mol = Mollifier::default();
    let a = mollify(&t, &mol).unwrap();
    let b = mollify_direct(&t, &mol);
    let scale = t.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for k in interior(&t, 10.0) {
        assert!((a.values[k] - b.values[k]).norm() <= 1e-6 * scale);
    }
}

#[test]
fn mollifier_rejects_unresolvable_widths() {
    let t = phase_trace(1.0, LambdaGrid::uniform(10.0, 20.0, 101).unwrap());
    assert!(matches!(mollify(&t, &Mollifier::new(1e3).unwrap()), Err(sojourn::Error::GridTooCoarse(_))));
    assert!(matches!(mollify(&t, &Mollifier::new(1e-3).unwrap()), Err(sojourn::Error::GridTooCoarse(_))));
    assert!(Mollifier::new(0.0).is_err());
}

#[test]
fn comparison_reports_phase_shift() {
    let grid = LambdaGrid::uniform(10.0, 100.0, 4000).unwrap();
    let a = phase_trace(0.5, grid);
    let same = compare_traces(&a, &a, None).unwrap();
    assert_eq!(same.rel_l2, 0.0);
    assert_eq!(same.phase_slope_diff, 0.0);
    let b = phase_trace(0.4, grid);
    let c = compare_traces(&a, &b, Some((20.0, 90.0))).unwrap();
    assert!((c.phase_slope_diff - 0.1).abs() < 1e-9);
    assert!(c.amp_exponent_diff.abs() < 1e-12);
    let other = phase_trace(0.4, LambdaGrid::uniform(10.0, 100.0, 4001).unwrap());
    assert!(compare_traces(&a, &other, None).is_err());
}

#[test]
fn ah_trace_follows_oracle_phase() {
    let m = ManifoldModel::hyperbolic(3);
    let (z, y) = ([0.7, 0.2, -0.1], [0.5, 0.3]);
    let grid = LambdaGrid::uniform(10.0, 100.0, 4096).unwrap();
    let t = synthesize_trace(&m, &z, &y, &grid, &Convention::for_model(&m), &SearchOptions::default()).unwrap();
    let (slope, e) = trace_fits(&t, 0..grid.len);
    assert!((slope - h3_oracle_phase(&z, &y)).abs() < 1e-7);
    assert!(e.abs() < 1e-9);
}
