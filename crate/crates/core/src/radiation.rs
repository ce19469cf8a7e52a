//! Radial rescaled wave equation and its radiation field.
//!
//! For a rotationally symmetric scattering model in dimension three with
//! boundary metric `h = μ(x)·h_round`, a single spherical-harmonic mode
//! `v(s, x)·Y_ℓ` of the rescaled field satisfies
//!
//! ```text
//! ∂ₓw = -(A/2)w - (A x²/2)∂ₓv + (L - C₀)v,    w = 2∂ₛv + x²∂ₓv,
//! ```
//!
//! with `A = μ'/μ`, `L = ℓ(ℓ+1)/μ`, `C₀ = xA`. Lines `s = const` are
//! outgoing characteristics, so `w` is recovered at each `s` by integrating
//! in `x` from the inner boundary `x = x_max`, and `v` is advected inward at
//! speed `x²/2`. The radiation field is `∂ₛv(s, 0)`.

use crate::error::{Error, Result};
use crate::geometry::{GeometryKind, ManifoldModel};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Courant number used for the admissible `ds`.
pub const CFL_NUMBER: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedGrid {
    pub s_start: f64,
    pub s_end: f64,
    pub ds: f64,
    pub x_max: f64,
    pub dx: f64,
    pub ell: usize,
}

impl ReducedGrid {
    /// Grid with the largest admissible `ds` for the given `dx`.
    pub fn with_cfl(s_start: f64, s_end: f64, x_max: f64, dx: f64, ell: usize) -> Result<Self> {
        let ds = CFL_NUMBER * dx / (0.5 * x_max * x_max);
        Self::new(s_start, s_end, ds, x_max, dx, ell)
    }

    pub fn new(s_start: f64, s_end: f64, ds: f64, x_max: f64, dx: f64, ell: usize) -> Result<Self> {
        if !(s_end > s_start) || !(ds > 0.0) || !(x_max > 0.0) || !(dx > 0.0) || dx > 0.25 * x_max {
            return Err(Error::InvalidArgument(format!(
                "bad reduced grid s ∈ [{s_start}, {s_end}], ds = {ds}, x ∈ [0, {x_max}], dx = {dx}"
            )));
        }
        let g = Self {
            s_start,
            s_end,
            ds,
            x_max,
            dx,
            ell,
        };
        if ds > g.cfl_limit() * (1.0 + 1e-12) {
            return Err(Error::CflViolation {
                ds,
                limit: g.cfl_limit(),
            });
        }
        Ok(g)
    }

    /// Largest stable `ds`: the inward characteristic speed is at most `x_max²/2`.
    pub fn cfl_limit(&self) -> f64 {
        CFL_NUMBER * self.dx / (0.5 * self.x_max * self.x_max)
    }

    pub fn nx(&self) -> usize {
        (self.x_max / self.dx).round() as usize + 1
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.x_max / (self.nx() - 1) as f64
    }

    pub fn ns(&self) -> usize {
        ((self.s_end - self.s_start) / self.ds).ceil() as usize + 1
    }

    pub fn s(&self, k: usize) -> f64 {
        self.s_start + k as f64 * self.ds
    }
}

/// Which part of the regular flat solution seeds the computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PulseKind {
    /// Full regular solution, incoming and outgoing parts (d'Alembert for `ℓ = 0`).
    Regular,
    /// Outgoing part only, emitted through the inner boundary.
    Outgoing,
}

/// Profile `G(s) = (1 - u²)^p`, `u = (s - c)/h`, supported on `[-r₀, -r₀ + width]`.
///
/// At `s₀ = 0` the field is a shell whose outer radius is `r₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub r0: f64,
    pub width: f64,
    pub power: u32,
    pub kind: PulseKind,
}

impl PulseSpec {
    pub fn new(r0: f64, width: f64, power: u32, kind: PulseKind) -> Result<Self> {
        if !(width > 0.0) || power < 2 || !r0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "pulse needs width > 0 and power ≥ 2, got width {width}, power {power}"
            )));
        }
        Ok(Self { r0, width, power, kind })
    }

    pub fn support(&self) -> (f64, f64) {
        (-self.r0, -self.r0 + self.width)
    }

    /// `G^{(k)}(s)` for `k ≤ 4`.
    pub fn profile(&self, s: f64, k: usize) -> f64 {
        let h = 0.5 * self.width;
        let c = -self.r0 + h;
        let u = (s - c) / h;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        // (1 - u²)^p expanded in powers of u
        let p = self.power as usize;
        let mut coeffs = vec![0.0; 2 * p + 1];
        let mut binom = 1.0;
        for j in 0..=p {
            coeffs[2 * j] = if j % 2 == 0 { binom } else { -binom };
            binom = binom * (p - j) as f64 / (j + 1) as f64;
        }
        for _ in 0..k {
            coeffs = coeffs.iter().enumerate().skip(1).map(|(i, a)| a * i as f64).collect();
        }
        let val = coeffs.iter().rev().fold(0.0, |acc, a| acc * u + a);
        val / h.powi(k as i32)
    }
}

/// Regular flat solution of mode `ℓ` built from the profile, with `(v, w)` at `(s, x)`.
///
/// With `a = s` and `b = s + 2/x`:
/// `ℓ = 0`: `v = G(a) - G(b)`, `w = 2G'(a)`;
/// `ℓ = 1`: `v = -G'(a) - G'(b) - xG(a) + xG(b)`, `w = -2G''(a) - 2xG'(a) - x²G(a) + x²G(b)`.
/// The outgoing part drops every term in `b`.
pub fn flat_mode_solution(pulse: &PulseSpec, ell: usize, s: f64, x: f64) -> Result<(f64, f64)> {
    let incoming = pulse.kind == PulseKind::Regular;
    let g = |t: f64, k: usize| pulse.profile(t, k);
    let gb = |k: usize| {
        if incoming && x > 0.0 {
            g(s + 2.0 / x, k)
        } else {
            0.0
        }
    };
    match ell {
        0 => Ok((g(s, 0) - gb(0), 2.0 * g(s, 1))),
        1 => Ok((
            -g(s, 1) - gb(1) - x * g(s, 0) + x * gb(0),
            -2.0 * g(s, 2) - 2.0 * x * g(s, 1) - x * x * g(s, 0) + x * x * gb(0),
        )),
        _ => Err(Error::InvalidArgument(format!("mode ℓ = {ell} not supported (0 or 1)"))),
    }
}

/// Exact radiation field of the flat mode: `G'` for `ℓ = 0`, `-G''` for `ℓ = 1`.
pub fn flat_mode_trace(pulse: &PulseSpec, ell: usize, s: f64) -> f64 {
    match ell {
        0 => pulse.profile(s, 1),
        _ => -pulse.profile(s, 2),
    }
}

/// Solution samples kept during the solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialField {
    pub grid: ReducedGrid,
    pub s: Vec<f64>,
    /// `v(s, x)` at `x = 0, dx, 2dx`.
    pub near_boundary: [Vec<f64>; 3],
    /// `w(s, 0)/2`, the direct evaluation of `∂ₛv(s, 0)`.
    pub ds_v_boundary: Vec<f64>,
    /// Final slice `v(s_end, ·)`.
    pub final_slice: Vec<f64>,
    /// Discrete energy `Σ v² dx` per step.
    pub energy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiationTrace {
    pub s: Vec<f64>,
    pub values: Vec<f64>,
    pub source: String,
}

struct Coefficients {
    x: Vec<f64>,
    a: Vec<f64>,
    l_minus_c0: Vec<f64>,
}

fn coefficients(model: &ManifoldModel, grid: &ReducedGrid) -> Result<Coefficients> {
    if model.kind != GeometryKind::Scattering || !model.is_radial() {
        return Err(Error::InvalidArgument("the reduced solver needs a rotationally symmetric scattering model".into()));
    }
    if model.dim != 3 {
        return Err(Error::InvalidArgument("the reduced solver is implemented for n = 3".into()));
    }
    if !model.is_exact() && grid.x_max > 1.0 {
        return Err(Error::InvalidArgument(
            "inner boundary must lie in the flat core (x_max ≤ 1) for perturbed models".into(),
        ));
    }
    let nx = grid.nx();
    let amp = model.amplitude();
    let ell = grid.ell as f64;
    let mut c = Coefficients {
        x: Vec::with_capacity(nx),
        a: Vec::with_capacity(nx),
        l_minus_c0: Vec::with_capacity(nx),
    };
    for i in 0..nx {
        let x = grid.x(i);
        let (mu, dmu) = if model.is_exact() {
            (1.0, 0.0)
        } else {
            let (q, dq) = model.radial_profile(x);
            (1.0 + amp * q, amp * dq)
        };
        let a = dmu / mu;
        c.x.push(x);
        c.a.push(a);
        c.l_minus_c0.push(ell * (ell + 1.0) / mu - x * a);
    }
    Ok(c)
}

/// `∂ₛv` for the current slice, and `w` as a by-product.
fn slice_rhs(c: &Coefficients, dx: f64, v: &[f64], w_inner: f64, w: &mut [f64], dv: &mut [f64]) {
    let n = v.len();
    let central = |i: usize| -> f64 {
        if i == 0 {
            (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx)
        } else if i == n - 1 {
            (3.0 * v[i] - 4.0 * v[i - 1] + v[i - 2]) / (2.0 * dx)
        } else {
            (v[i + 1] - v[i - 1]) / (2.0 * dx)
        }
    };
    let src = |i: usize| -> f64 { -0.5 * c.a[i] * c.x[i] * c.x[i] * central(i) + c.l_minus_c0[i] * v[i] };
    w[n - 1] = w_inner;
    let mut g_next = src(n - 1);
    for i in (0..n - 1).rev() {
        let g_here = src(i);
        let lhs = 1.0 - 0.25 * dx * c.a[i];
        let rhs = w[i + 1] * (1.0 + 0.25 * dx * c.a[i + 1]) - 0.5 * dx * (g_here + g_next);
        w[i] = rhs / lhs;
        g_next = g_here;
    }
    for i in 0..n {
        let upwind = match i {
            0 => 0.0,
            1 => (v[1] - v[0]) / dx,
            _ => (3.0 * v[i] - 4.0 * v[i - 1] + v[i - 2]) / (2.0 * dx),
        };
        dv[i] = 0.5 * (w[i] - c.x[i] * c.x[i] * upwind);
    }
}

/// Solves the reduced rescaled wave equation for mode `grid.ell`.
///
/// The initial slice `s = s_start` and the inflow `w(s, x_max)` come from the
/// flat mode solution of `pulse`; for perturbed models the inner boundary sits
/// in the flat core, and outgoing data makes the inflow exact up to
/// back-scattering.
pub fn solve_rescaled_wave(model: &ManifoldModel, grid: &ReducedGrid, pulse: &PulseSpec) -> Result<RadialField> {
    let c = coefficients(model, grid)?;
    let nx = grid.nx();
    let dx = grid.x_max / (nx - 1) as f64;
    let ns = grid.ns();
    let ds = grid.ds;
    let ell = grid.ell;

    let energy = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>() * dx;
    let mut v: Vec<f64> = (0..nx)
        .map(|i| flat_mode_solution(pulse, ell, grid.s_start, c.x[i]).map(|p| p.0))
        .collect::<Result<_>>()?;
    let w_in = |s: f64| flat_mode_solution(pulse, ell, s, grid.x_max).map(|p| p.1);

    let mut field = RadialField {
        grid: *grid,
        s: Vec::with_capacity(ns),
        near_boundary: [Vec::with_capacity(ns), Vec::with_capacity(ns), Vec::with_capacity(ns)],
        ds_v_boundary: Vec::with_capacity(ns),
        final_slice: Vec::new(),
        energy: Vec::with_capacity(ns),
    };
    // energy scale of the data: |v|² of the flat mode solution over the inflow history
    let mut e_ref = energy(&v);
    for k in 0..ns {
        let (vb, _) = flat_mode_solution(pulse, ell, grid.s(k), grid.x_max)?;
        let (v0, _) = flat_mode_solution(pulse, ell, grid.s(k), 0.0)?;
        e_ref = e_ref.max(grid.x_max * vb.abs().max(v0.abs()).powi(2));
    }
    let mut w = vec![0.0; nx];
    let mut k1 = vec![0.0; nx];
    let mut k2 = vec![0.0; nx];
    let mut k3 = vec![0.0; nx];
    let mut k4 = vec![0.0; nx];
    let mut tmp = vec![0.0; nx];

    for k in 0..ns {
        let s = grid.s(k);
        slice_rhs(&c, dx, &v, w_in(s)?, &mut w, &mut k1);
        field.s.push(s);
        for (j, row) in field.near_boundary.iter_mut().enumerate() {
            row.push(v[j]);
        }
        field.ds_v_boundary.push(0.5 * w[0]);
        let e = energy(&v);
        if !e.is_finite() || e > 2.0 * e_ref {
            return Err(Error::UnstableGrowth(s));
        }
        e_ref = e_ref.max(e);
        field.energy.push(e);
        if k + 1 == ns {
            break;
        }
        for i in 0..nx {
            tmp[i] = v[i] + 0.5 * ds * k1[i];
        }
        slice_rhs(&c, dx, &tmp, w_in(s + 0.5 * ds)?, &mut w, &mut k2);
        for i in 0..nx {
            tmp[i] = v[i] + 0.5 * ds * k2[i];
        }
        slice_rhs(&c, dx, &tmp, w_in(s + 0.5 * ds)?, &mut w, &mut k3);
        for i in 0..nx {
            tmp[i] = v[i] + ds * k3[i];
        }
        slice_rhs(&c, dx, &tmp, w_in(s + ds)?, &mut w, &mut k4);
        for i in 0..nx {
            v[i] += ds / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if v.iter().any(|a| !a.is_finite()) {
            return Err(Error::UnstableGrowth(s + ds));
        }
    }
    field.final_slice = v;
    Ok(field)
}

/// Fourth-order central differences, second-order one-sided at the two ends.
fn central_derivative(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|k| {
            if n < 5 {
                0.0
            } else if k == 0 {
                (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h)
            } else if k == n - 1 {
                (3.0 * y[k] - 4.0 * y[k - 1] + y[k - 2]) / (2.0 * h)
            } else if k == 1 || k == n - 2 {
                (y[k + 1] - y[k - 1]) / (2.0 * h)
            } else {
                (y[k - 2] - 8.0 * y[k - 1] + 8.0 * y[k + 1] - y[k + 2]) / (12.0 * h)
            }
        })
        .collect()
}

/// `∂ₛv(s, 0)`: the boundary trace of `v` differentiated in `s`.
pub fn extract_radiation_field(field: &RadialField) -> RadiationTrace {
    RadiationTrace {
        s: field.s.clone(),
        values: central_derivative(&field.near_boundary[0], field.grid.ds),
        source: format!("reduced solve, ℓ = {}", field.grid.ell),
    }
}

/// Largest gap between the `x = 0` trace and its quadratic extrapolation
/// from `x = dx, 2dx` (and the linear one), relative to the trace size.
pub fn boundary_extrapolation_defect(field: &RadialField) -> f64 {
    let [v0, v1, v2] = &field.near_boundary;
    let d0 = central_derivative(v0, field.grid.ds);
    let d1 = central_derivative(v1, field.grid.ds);
    let d2 = central_derivative(v2, field.grid.ds);
    let scale = d0.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(1e-300);
    d0.iter()
        .zip(d1.iter().zip(&d2))
        .map(|(a, (b, c))| (a - (2.0 * b - c)).abs())
        .fold(0.0, f64::max)
        / scale
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Front {
    /// First crossing of `threshold·max|R|`, linearly interpolated.
    pub s_front: f64,
    pub s_peak: f64,
    pub peak: f64,
}

/// Earliest `s` where `|R|` reaches `threshold` times its maximum.
pub fn front_location(trace: &RadiationTrace, threshold: f64) -> Result<Front> {
    let (kmax, peak) = trace
        .values
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(k, m), (i, v)| if v.abs() > m { (i, v.abs()) } else { (k, m) });
    if !(peak > 0.0) {
        return Err(Error::EmptyTrace);
    }
    let level = threshold * peak;
    let k = trace.values.iter().position(|v| v.abs() >= level).expect("peak exceeds level");
    let s_front = if k == 0 {
        trace.s[0]
    } else {
        let (a, b) = (trace.values[k - 1].abs(), trace.values[k].abs());
        trace.s[k - 1] + (level - a) / (b - a) * (trace.s[k] - trace.s[k - 1])
    };
    Ok(Front {
        s_front,
        s_peak: trace.s[kmax],
        peak,
    })
}

/// `F(λ) = ∫R(s)e^{iλs}ds` by the rectangle rule.
pub fn fourier_transform(trace: &RadiationTrace, lam: f64) -> Complex64 {
    let ds = if trace.s.len() > 1 { trace.s[1] - trace.s[0] } else { 0.0 };
    trace
        .s
        .iter()
        .zip(&trace.values)
        .map(|(s, r)| Complex64::from_polar(*r, lam * s))
        .sum::<Complex64>()
        * ds
}

/// Unwrapped phase slope of `F(λ)` over `count` points of `[lo, hi]`.
pub fn fourier_phase_slope(trace: &RadiationTrace, lo: f64, hi: f64, count: usize) -> Result<f64> {
    if count < 2 || !(hi > lo) {
        return Err(Error::InvalidArgument("need at least two λ points on a nonempty interval".into()));
    }
    if trace.values.iter().all(|v| *v == 0.0) {
        return Err(Error::EmptyTrace);
    }
    let lam: Vec<f64> = (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect();
    let vals: Vec<Complex64> = lam.iter().map(|&l| fourier_transform(trace, l)).collect();
    let phase = crate::poisson::unwrap_phase(&vals);
    Ok(crate::poisson::fit_slope(&lam, &phase))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulse(kind: PulseKind, power: u32) -> PulseSpec {
        PulseSpec::new(5.0, 0.2, power, kind).unwrap()
    }

    #[test]
    fn profile_derivatives_match_differences() {
        let p = pulse(PulseKind::Regular, 4);
        let s = -4.93;
        let h = 1e-6;
        for k in 0..3 {
            let fd = (p.profile(s + h, k) - p.profile(s - h, k)) / (2.0 * h);
            assert!((fd - p.profile(s, k + 1)).abs() < 1e-5 * p.profile(s, k + 1).abs().max(1.0));
        }
        assert_eq!(p.profile(-5.0, 0), 0.0);
        assert_eq!(p.profile(-4.9, 0), 1.0);
    }

    #[test]
    fn flat_modes_solve_reduced_equation() {
        // ∂ₓw = ℓ(ℓ+1)v and w = 2∂ₛv + x²∂ₓv on the closed forms
        let p = pulse(PulseKind::Regular, 4);
        let h = 1e-6;
        for ell in [0, 1] {
            for (s, x) in [(-5.5, 2.0), (-5.2, 0.8), (-6.0, 1.7)] {
                let (v, w) = flat_mode_solution(&p, ell, s, x).unwrap();
                let vs = (flat_mode_solution(&p, ell, s + h, x).unwrap().0 - flat_mode_solution(&p, ell, s - h, x).unwrap().0) / (2.0 * h);
                let (vp, wp) = flat_mode_solution(&p, ell, s, x + h).unwrap();
                let (vm, wm) = flat_mode_solution(&p, ell, s, x - h).unwrap();
                let vx = (vp - vm) / (2.0 * h);
                let wx = (wp - wm) / (2.0 * h);
                let scale = 1.0 + w.abs() + v.abs();
                assert!((w - (2.0 * vs + x * x * vx)).abs() < 1e-4 * scale, "ℓ={ell} w");
                assert!((wx - (ell * (ell + 1)) as f64 * v).abs() < 1e-4 * scale, "ℓ={ell} wx");
            }
        }
    }

    #[test]
    fn cfl_is_enforced() {
        let e = ReducedGrid::new(-8.0, 0.0, 0.1, 1.0, 0.01, 0).unwrap_err();
        assert!(matches!(e, Error::CflViolation { .. }));
    }

    #[test]
    fn zero_data_gives_zero_trace() {
        let m = ManifoldModel::flat(3);
        let g = ReducedGrid::with_cfl(-8.0, -6.0, 1.0, 0.02, 0).unwrap();
        let far = PulseSpec::new(-20.0, 0.2, 3, PulseKind::Outgoing).unwrap();
        let f = solve_rescaled_wave(&m, &g, &far).unwrap();
        let t = extract_radiation_field(&f);
        assert!(t.values.iter().all(|v| *v == 0.0));
        assert!(matches!(front_location(&t, 0.05), Err(Error::EmptyTrace)));
    }
}
