//! High-frequency Poisson kernel and Eisenstein traces from branch data.
//!
//! A trace is a function of the spectral parameter `λ` on a uniform grid.
//! Synthesized traces approximate the adjoint kernel `P(λ)*(y, z)`; the
//! Euclidean closed form for the kernel itself is the complex conjugate.

use crate::error::{Error, Result};
use crate::geometry::{GeometryKind, ManifoldModel};
use crate::sojourn::{find_branches, Branch, BranchSet, SearchOptions};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Which asymptotic formula a trace follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Prefactor {
    /// `i^k e^{iλS} (λ/2πi)^{(n-1)/2} J^{-1/2}`.
    ScatteringPoisson,
    /// The scattering term times `i/(2λ)`.
    AhEisenstein,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Convention {
    pub kind: GeometryKind,
    pub n: usize,
    pub prefactor: Prefactor,
}

impl Convention {
    pub fn for_model(model: &ManifoldModel) -> Self {
        let prefactor = match model.kind {
            GeometryKind::Scattering => Prefactor::ScatteringPoisson,
            GeometryKind::AsympHyperbolic => Prefactor::AhEisenstein,
        };
        Self {
            kind: model.kind,
            n: model.dim,
            prefactor,
        }
    }
}

/// Uniform grid `start + k·step`, `k < len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl LambdaGrid {
    /// `len` points from `a` to `b` inclusive.
    pub fn uniform(a: f64, b: f64, len: usize) -> Result<Self> {
        if len < 2 || !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidArgument(format!("bad λ grid [{a}, {b}] with {len} points")));
        }
        Ok(Self {
            start: a,
            step: (b - a) / (len - 1) as f64,
            len,
        })
    }

    pub fn at(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.at(k)).collect()
    }

    pub fn end(&self) -> f64 {
        self.at(self.len - 1)
    }
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self::uniform(10.0, 100.0, 4096).expect("valid default grid")
    }
}

/// Compactly supported bump `φ̌(s) = c·exp(-1/(1-(s/w)²))` on `|s| < w` with `∫φ̌ = 1`.
///
/// The profile is `C^∞` with every derivative vanishing at `±w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    pub w: f64,
}

impl Default for Mollifier {
    fn default() -> Self {
        Self { w: 1.0 }
    }
}

/// `∫_{-1}^{1} exp(-1/(1-t²)) dt` by the trapezoid rule, which is spectrally accurate here.
fn unit_bump_mass() -> f64 {
    static MASS: std::sync::OnceLock<f64> = std::sync::OnceLock::new();
    *MASS.get_or_init(|| {
        let n = 20_000;
        let h = 2.0 / n as f64;
        (1..n)
            .map(|k| {
                let t = -1.0 + k as f64 * h;
                (-1.0 / (1.0 - t * t)).exp()
            })
            .sum::<f64>()
            * h
    })
}

impl Mollifier {
    pub fn new(w: f64) -> Result<Self> {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::ParamOutOfRange {
                name: "w".into(),
                value: w,
                range: "(0, ∞)".into(),
            });
        }
        Ok(Self { w })
    }

    /// `φ̌(s)`.
    pub fn profile(&self, s: f64) -> f64 {
        let t = s / self.w;
        if t.abs() >= 1.0 {
            return 0.0;
        }
        (-1.0 / (1.0 - t * t)).exp() / (self.w * unit_bump_mass())
    }

    /// The λ-domain kernel `φ(ν) = (1/2π)∫φ̌(s)e^{iνs}ds` (real and even).
    pub fn kernel(&self, nu: f64) -> f64 {
        let n = 4000;
        let h = 2.0 * self.w / n as f64;
        let acc: f64 = (1..n)
            .map(|k| {
                let s = -self.w + k as f64 * h;
                self.profile(s) * (nu * s).cos()
            })
            .sum();
        acc * h / (2.0 * PI)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchProvenance {
    pub dir: Vec<f64>,
    pub s: f64,
    pub jacobian: f64,
    pub conj_count: usize,
}

impl From<&Branch> for BranchProvenance {
    fn from(b: &Branch) -> Self {
        Self {
            dir: b.dir.clone(),
            s: b.limit.s,
            jacobian: b.jacobian,
            conj_count: b.conj_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTrace {
    pub grid: LambdaGrid,
    pub values: Vec<Complex64>,
    pub convention: Convention,
    pub mollifier: Option<Mollifier>,
    pub branches: Vec<BranchProvenance>,
}

impl KernelTrace {
    pub fn lambdas(&self) -> Vec<f64> {
        self.grid.points()
    }

    /// Phase of each value, unwrapped along the grid.
    pub fn unwrapped_phase(&self) -> Vec<f64> {
        unwrap_phase(&self.values)
    }

    /// True when `trace(-λ) = conj(trace(λ))` holds on mirrored grid points to `tol`.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        let lam = self.lambdas();
        let scale = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        for (i, &l) in lam.iter().enumerate() {
            if let Some(j) = lam.iter().position(|&m| (m + l).abs() <= 1e-9 * self.grid.step.abs()) {
                if (self.values[j] - self.values[i].conj()).norm() > tol * scale {
                    return false;
                }
            }
        }
        true
    }
}

/// Cumulative phase with jumps larger than `π` removed.
pub fn unwrap_phase(values: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for v in values {
        let a = v.arg();
        if let Some(p) = prev {
            let mut d = a + offset - p;
            while d > PI {
                offset -= 2.0 * PI;
                d -= 2.0 * PI;
            }
            while d < -PI {
                offset += 2.0 * PI;
                d += 2.0 * PI;
            }
        }
        let u = a + offset;
        out.push(u);
        prev = Some(u);
    }
    out
}

/// `(λ/2πi)^{(n-1)/2}` on the principal branch for `λ > 0`.
fn spectral_power(lam: f64, n: usize) -> Complex64 {
    let base = Complex64::new(0.0, -lam / (2.0 * PI));
    base.powf((n as f64 - 1.0) / 2.0)
}

fn i_pow(k: usize) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// One branch's contribution at spectral parameter `lam`.
///
/// Negative `lam` returns the conjugate of the value at `|lam|`.
pub fn branch_amplitude(branch: &Branch, lam: f64, convention: &Convention) -> Result<Complex64> {
    if !branch.nondegenerate {
        return Err(Error::DegenerateBranch(format!(
            "branch with direction {:?} has Jacobian {:e}",
            branch.dir, branch.jacobian
        )));
    }
    amplitude_from_data(branch.limit.s, branch.jacobian, branch.conj_count, lam, convention)
}

/// The branch term from raw data `(S, J, k)`.
pub fn amplitude_from_data(s: f64, jacobian: f64, k: usize, lam: f64, convention: &Convention) -> Result<Complex64> {
    if lam == 0.0 || !lam.is_finite() {
        return Err(Error::InvalidArgument("λ must be finite and nonzero".into()));
    }
    if !(jacobian > 0.0) {
        return Err(Error::DegenerateBranch(format!("Jacobian {jacobian:e}")));
    }
    if lam < 0.0 {
        return amplitude_from_data(s, jacobian, k, -lam, convention).map(|v| v.conj());
    }
    let phase = Complex64::from_polar(1.0, lam * s);
    let mut v = i_pow(k) * phase * spectral_power(lam, convention.n) / jacobian.sqrt();
    if convention.prefactor == Prefactor::AhEisenstein {
        v *= Complex64::new(0.0, 1.0 / (2.0 * lam));
    }
    Ok(v)
}

/// Sums branch terms of a computed branch set over the grid.
pub fn synthesize_from_branches(set: &BranchSet, grid: &LambdaGrid, convention: &Convention) -> Result<KernelTrace> {
    if set.branches.is_empty() {
        return Err(Error::NoBranchFound("empty branch set".into()));
    }
    if let Some(b) = set.branches.iter().find(|b| !b.nondegenerate) {
        return Err(Error::DegenerateBranch(format!(
            "branch with direction {:?} is degenerate (Jacobian {:e})",
            b.dir, b.jacobian
        )));
    }
    let mut values = vec![Complex64::new(0.0, 0.0); grid.len];
    for b in &set.branches {
        for (k, v) in values.iter_mut().enumerate() {
            *v += branch_amplitude(b, grid.at(k), convention)?;
        }
    }
    Ok(KernelTrace {
        grid: *grid,
        values,
        convention: *convention,
        mollifier: None,
        branches: set.branches.iter().map(BranchProvenance::from).collect(),
    })
}

/// Finds the branches from `z` to `y_target` and sums their terms.
pub fn synthesize_trace(
    model: &ManifoldModel,
    z: &[f64],
    y_target: &[f64],
    grid: &LambdaGrid,
    convention: &Convention,
    opts: &SearchOptions,
) -> Result<KernelTrace> {
    let set = find_branches(model, z, y_target, opts)?;
    synthesize_from_branches(&set, grid, convention)
}

/// Applies `φ̌` as a multiplier in the dual variable `s`.
///
/// The trace is zero padded to four times its length, transformed,
/// multiplied by `φ̌(s_j)` with `s_j = 2πj/(MΔλ)` and transformed back.
/// The bump must fit below the Nyquist limit `π/Δλ` and span at least two
/// dual samples.
pub fn mollify(trace: &KernelTrace, m: &Mollifier) -> Result<KernelTrace> {
    let n = trace.values.len();
    let dl = trace.grid.step;
    let nyquist = PI / dl;
    let size = (4 * n).next_power_of_two();
    let ds = 2.0 * PI / (size as f64 * dl);
    if m.w >= nyquist || m.w < 2.0 * ds {
        return Err(Error::GridTooCoarse(format!(
            "mollifier width {} outside [{:.3e}, {:.3e})",
            m.w,
            2.0 * ds,
            nyquist
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    buf[..n].copy_from_slice(&trace.values);
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for (j, v) in buf.iter_mut().enumerate() {
        let jj = if j <= size / 2 { j as f64 } else { j as f64 - size as f64 };
        *v *= m.profile(jj * ds) * dl;
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    // forward+inverse scale by `size`; `dl/size·(1/2π)·(2π)` leaves the convolution sum `Σφ(λ-μ)v(μ)Δμ`
    let norm = 1.0 / (size as f64 * dl);
    let values = buf[..n].iter().map(|v| v * norm).collect();
    Ok(KernelTrace {
        values,
        mollifier: Some(*m),
        ..trace.clone()
    })
}

/// Direct quadrature of `Σ_μ φ(λ-μ) v(μ) Δμ`; slow, for cross-checks.
pub fn mollify_direct(trace: &KernelTrace, m: &Mollifier) -> KernelTrace {
    let n = trace.values.len();
    let dl = trace.grid.step;
    let kern: Vec<f64> = (0..n).map(|d| m.kernel(d as f64 * dl)).collect();
    let values = (0..n)
        .map(|i| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, v) in trace.values.iter().enumerate() {
                acc += v * kern[i.abs_diff(j)];
            }
            acc * dl
        })
        .collect();
    KernelTrace {
        values,
        mollifier: Some(*m),
        ..trace.clone()
    }
}

/// Exact Euclidean Poisson kernel `(iλ/2π)^{(n-1)/2} e^{iλθ·z}`.
pub fn euclidean_oracle(z: &[f64], theta: &[f64], lam: f64, n: usize) -> Complex64 {
    let tz: f64 = z.iter().zip(theta).map(|(a, b)| a * b).sum();
    let amp = Complex64::new(0.0, lam / (2.0 * PI)).powf((n as f64 - 1.0) / 2.0);
    amp * Complex64::from_polar(1.0, lam * tz)
}

/// Euclidean kernel sampled on a grid.
pub fn euclidean_oracle_trace(z: &[f64], theta: &[f64], grid: &LambdaGrid) -> KernelTrace {
    let n = z.len();
    KernelTrace {
        grid: *grid,
        values: (0..grid.len).map(|k| euclidean_oracle(z, theta, grid.at(k), n)).collect(),
        convention: Convention {
            kind: GeometryKind::Scattering,
            n,
            prefactor: Prefactor::ScatteringPoisson,
        },
        mollifier: None,
        branches: Vec::new(),
    }
}

/// Hyperbolic sojourn time `log((x² + |y-y'|²)/x)` for `z = (x, y)`.
pub fn h3_oracle_phase(z: &[f64], y_prime: &[f64]) -> f64 {
    let x = z[0];
    let d2: f64 = z[1..].iter().zip(y_prime).map(|(a, b)| (a - b) * (a - b)).sum();
    ((x * x + d2) / x).ln()
}

/// Unnormalized Eisenstein trace `λ^{(n-1)/2-1} e^{iλS} (x/(x²+|y-y'|²))^{(n-1)/2}`.
///
/// Only the phase and the power law are fixed; amplitudes are compared after
/// [`calibrate_constant`].
pub fn h3_oracle_trace(z: &[f64], y_prime: &[f64], grid: &LambdaGrid) -> KernelTrace {
    let n = z.len();
    let s = h3_oracle_phase(z, y_prime);
    let p = (n as f64 - 1.0) / 2.0;
    let spatial = (-s).exp().powf(p);
    KernelTrace {
        grid: *grid,
        values: (0..grid.len)
            .map(|k| {
                let lam = grid.at(k);
                Complex64::from_polar(lam.powf(p - 1.0) * spatial, lam * s)
            })
            .collect(),
        convention: Convention {
            kind: GeometryKind::AsympHyperbolic,
            n,
            prefactor: Prefactor::AhEisenstein,
        },
        mollifier: None,
        branches: Vec::new(),
    }
}

/// Least-squares constant `c` minimising `‖a - c·b‖` on the grid.
pub fn calibrate_constant(a: &KernelTrace, b: &KernelTrace) -> Result<Complex64> {
    check_grids(a, b)?;
    let num: Complex64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y.conj()).sum();
    let den: f64 = b.values.iter().map(|y| y.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::EmptyTrace);
    }
    Ok(num / den)
}

/// Multiplies every value by `c`.
pub fn scale_trace(t: &KernelTrace, c: Complex64) -> KernelTrace {
    KernelTrace {
        values: t.values.iter().map(|v| v * c).collect(),
        ..t.clone()
    }
}

/// Pointwise complex conjugate; maps the adjoint convention to the kernel convention.
pub fn conjugate_trace(t: &KernelTrace) -> KernelTrace {
    KernelTrace {
        values: t.values.iter().map(|v| v.conj()).collect(),
        ..t.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceComparison {
    /// `‖a - b‖₂ / ‖b‖₂` over the window.
    pub rel_l2: f64,
    pub phase_slope_a: f64,
    pub phase_slope_b: f64,
    /// `slope(a) - slope(b)`.
    pub phase_slope_diff: f64,
    pub amp_exponent_a: f64,
    pub amp_exponent_b: f64,
    pub amp_exponent_diff: f64,
}

fn check_grids(a: &KernelTrace, b: &KernelTrace) -> Result<()> {
    let g = (&a.grid, &b.grid);
    let tol = 1e-12 * g.0.step.abs().max(g.0.start.abs());
    if g.0.len != g.1.len || (g.0.start - g.1.start).abs() > tol || (g.0.step - g.1.step).abs() > tol {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", g.0, g.1)));
    }
    if a.values.len() != g.0.len || b.values.len() != g.1.len {
        return Err(Error::GridMismatch("value count differs from grid length".into()));
    }
    Ok(())
}

/// Slope of the least-squares line through `(x, y)`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Phase slope and amplitude exponent of a trace over grid indices `range`.
pub fn trace_fits(t: &KernelTrace, range: std::ops::Range<usize>) -> (f64, f64) {
    let lam: Vec<f64> = t.lambdas()[range.clone()].to_vec();
    let ph = unwrap_phase(&t.values[range.clone()]);
    let loglam: Vec<f64> = lam.iter().map(|l| l.abs().ln()).collect();
    let logamp: Vec<f64> = t.values[range].iter().map(|v| v.norm().ln()).collect();
    (fit_slope(&lam, &ph), fit_slope(&loglam, &logamp))
}

/// Compares `a` against the reference `b` on the λ-window `[lo, hi]` (whole grid if `None`).
pub fn compare_traces(a: &KernelTrace, b: &KernelTrace, window: Option<(f64, f64)>) -> Result<TraceComparison> {
    check_grids(a, b)?;
    let lam = a.lambdas();
    let idx: Vec<usize> = (0..lam.len())
        .filter(|&k| window.map(|(lo, hi)| lam[k] >= lo && lam[k] <= hi).unwrap_or(true))
        .collect();
    if idx.len() < 2 {
        return Err(Error::EmptyTrace);
    }
    let range = idx[0]..idx[idx.len() - 1] + 1;
    let num: f64 = range.clone().map(|k| (a.values[k] - b.values[k]).norm_sqr()).sum();
    let den: f64 = range.clone().map(|k| b.values[k].norm_sqr()).sum();
    let rel_l2 = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    let (pa, ea) = trace_fits(a, range.clone());
    let (pb, eb) = trace_fits(b, range);
    Ok(TraceComparison {
        rel_l2,
        phase_slope_a: pa,
        phase_slope_b: pb,
        phase_slope_diff: pa - pb,
        amp_exponent_a: ea,
        amp_exponent_b: eb,
        amp_exponent_diff: ea - eb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_values() {
        let v = euclidean_oracle(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0], 2.0 * PI, 3);
        assert!((v - Complex64::new(0.0, 1.0)).norm() < 1e-13);
        let v = euclidean_oracle(&[0.0, 0.0], &[0.0, 1.0], 3.0, 2);
        assert!((v - Complex64::new(0.0, 3.0 / (2.0 * PI)).sqrt()).norm() < 1e-15);
        assert_eq!(h3_oracle_phase(&[1.0, 0.0], &[0.0]), 0.0);
        assert!((h3_oracle_phase(&[1.0, -1.0], &[0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((h3_oracle_phase(&[2.0, 0.0, 0.0], &[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn amplitude_rules() {
        let c = Convention {
            kind: GeometryKind::Scattering,
            n: 3,
            prefactor: Prefactor::ScatteringPoisson,
        };
        let a0 = amplitude_from_data(0.3, 1.0, 0, 7.0, &c).unwrap();
        let a1 = amplitude_from_data(0.3, 1.0, 1, 7.0, &c).unwrap();
        let a4 = amplitude_from_data(0.3, 4.0, 0, 7.0, &c).unwrap();
        assert!((a1 - a0 * Complex64::i()).norm() < 1e-15);
        assert!((a4 - a0 * 0.5).norm() < 1e-15);
        let neg = amplitude_from_data(0.3, 1.0, 0, -7.0, &c).unwrap();
        assert_eq!(neg, a0.conj());
        assert!(amplitude_from_data(0.3, 0.0, 0, 7.0, &c).is_err());
    }

    #[test]
    fn profile_is_normalized() {
        let m = Mollifier::new(0.7).unwrap();
        let n = 5000;
        let h = 1.4 / n as f64;
        let mass: f64 = (0..=n).map(|k| m.profile(-0.7 + k as f64 * h)).sum::<f64>() * h;
        assert!((mass - 1.0).abs() < 1e-12);
        assert_eq!(m.profile(0.7), 0.0);
    }

    #[test]
    fn unwrap_recovers_linear_phase() {
        let v: Vec<Complex64> = (0..500).map(|k| Complex64::from_polar(1.0, 0.37 * k as f64)).collect();
        let p = unwrap_phase(&v);
        assert!((p[499] - p[0] - 0.37 * 499.0).abs() < 1e-9);
    }
}
