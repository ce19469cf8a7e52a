//! Geodesic flow in the interior chart and the rescaled Hamiltonian flow in
//! the boundary collar.
//!
//! Interior states pack `[z, ζ, t]` and follow `H = ½|ζ|²_g`. Once the path
//! is outgoing with `x < collar_x0`, the state is moved to collar coordinates
//! `[x, y, s, ξ, η, σ]` and follows the Hamilton field of
//!
//! * scattering: `p = -2ξσ - x²ξ² - h(x, y, η)`, with `s = t - 1/x`;
//! * asymptotically hyperbolic: `p = -(2ξσ + xξ² + x h(x, y, η))`, with `s = t + log x`.
//!
//! The collar flow crosses `x = 0` transversally, where the boundary limit
//! `(s, y, σ, η)` is read off at an exactly located event.

use crate::error::{Error, Result};
use crate::geometry::{
    chart_transition, interior_metric, interior_metric_data, BoundaryChart, Chart, ChartPoint, CollarScalar,
    CotangentPoint, GeometryKind, ManifoldModel,
};
use crate::linalg::{self, Mat};
use crate::ode::{self, Crossing, OdeOptions, OdeSolution};
use serde::{Deserialize, Serialize};

/// A point of phase space along a path.
///
/// Interior states carry `sigma = |ζ|_g` and `s = t - 1/x` (or `t + log x`)
/// evaluated at the current point, so both fields are continuous across the
/// chart switch.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub base: ChartPoint,
    /// `ζ` in the interior chart, `(ξ, η)` in the collar.
    pub momentum: Vec<f64>,
    pub s: f64,
    pub sigma: f64,
    pub param: f64,
    /// Physical time; infinite on the boundary.
    pub t: f64,
}

impl PhaseState {
    pub fn chart(&self) -> Chart {
        self.base.chart
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathStatus {
    ReachedBoundary,
    Trapped,
    MaxTime,
}

/// Integrator settings for geodesic paths.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowOptions {
    pub ode: OdeOptions,
    /// A path is trapped if its physical time exceeds this multiple of the
    /// model's diameter scale before it enters the collar.
    pub trap_factor: f64,
    /// Optional cap on physical time (reported as `MaxTime`).
    pub max_time: f64,
    /// Largest accepted consistency error of a boundary limit.
    pub limit_tol: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default(),
            trap_factor: 50.0,
            max_time: f64::INFINITY,
            limit_tol: 1e-6,
        }
    }
}

/// One integrated piece of a path.
#[derive(Debug, Clone)]
pub struct Segment {
    pub chart: Chart,
    /// Boundary chart used for `y` on collar segments.
    pub boundary: Option<BoundaryChart>,
    pub solution: OdeSolution,
}

#[derive(Debug, Clone)]
pub struct GeodesicPath {
    pub samples: Vec<PhaseState>,
    pub status: PathStatus,
    /// `(param, t)` pairs for every sample.
    pub t_of_param: Vec<(f64, f64)>,
    pub interior: Option<Segment>,
    pub collar: Option<Segment>,
    pub dim: usize,
    pub kind: GeometryKind,
    /// Consistency tolerance applied by [`boundary_limits`].
    pub limit_tol: f64,
}

/// Sojourn-relation image of a geodesic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLimit {
    pub s: f64,
    /// Boundary point: `ω ∈ S^{n-1} ⊂ ℝⁿ` (scattering) or `y ∈ ℝ^{n-1}` (AH).
    pub y: Vec<f64>,
    pub sigma: f64,
    /// Limiting fibre variable, raised with `h₀` and written in the same
    /// coordinates as `y` (tangent to the sphere for scattering models).
    pub eta: Vec<f64>,
    pub err: f64,
}

/// Orthonormal coframe at an interior point: unit covectors are `ζ = L u`, `|u| = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoFrame {
    pub dim: usize,
    /// Lower Cholesky factor of `g`.
    pub l: Mat,
    /// `L^{-T}`, mapping `u` to the velocity `g⁻¹ζ`.
    pub l_inv_t: Mat,
}

impl CoFrame {
    pub fn at(model: &ManifoldModel, z: &[f64]) -> Result<Self> {
        let n = model.dim;
        let im = interior_metric(model, z)?;
        let l = linalg::cholesky(&im.metric.components, n)
            .ok_or_else(|| Error::OutsideChart("metric not positive definite".into()))?;
        let l_inv = linalg::inverse(&l, n).ok_or_else(|| Error::OutsideChart("degenerate coframe".into()))?;
        Ok(Self {
            dim: n,
            l,
            l_inv_t: linalg::transpose(&l_inv),
        })
    }

    /// Unit covector for Euclidean unit vector `u`.
    pub fn covector(&self, u: &[f64]) -> Vec<f64> {
        linalg::mat_vec(&self.l, u, self.dim)[..self.dim].to_vec()
    }

    /// Velocity of the unit-speed geodesic with initial covector `L u`.
    pub fn velocity(&self, u: &[f64]) -> Vec<f64> {
        linalg::mat_vec(&self.l_inv_t, u, self.dim)[..self.dim].to_vec()
    }

    /// Inverse of [`covector`](Self::covector), normalised.
    pub fn direction_of(&self, zeta: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let li = linalg::transpose(&self.l_inv_t);
        let u = linalg::mat_vec(&li, zeta, n);
        let l = linalg::norm(&u[..n]);
        u[..n].iter().map(|v| v / l).collect()
    }
}

/// Unit covector at `z` in Euclidean direction `u` of the orthonormal coframe.
pub fn unit_covector(model: &ManifoldModel, z: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    Ok(CoFrame::at(model, z)?.covector(u))
}

pub(crate) fn interior_len(n: usize) -> usize {
    2 * n + 1
}

pub(crate) fn collar_len(n: usize) -> usize {
    2 * n + 2
}

/// Right-hand side of the interior geodesic flow on `[z, ζ, t]`.
pub(crate) fn interior_rhs(model: &ManifoldModel, y: &[f64], dy: &mut [f64]) -> Result<()> {
    let n = model.dim;
    let md = interior_metric_data(model, &y[..n])?;
    let zeta = &y[n..2 * n];
    let v = linalg::mat_vec(&md.inverse, zeta, n);
    dy[..n].copy_from_slice(&v[..n]);
    for k in 0..n {
        dy[n + k] = 0.5 * linalg::quad_form(&md.d_components[k], &v, n);
    }
    dy[2 * n] = linalg::dot(&v[..n], zeta).max(0.0).sqrt();
    Ok(())
}

/// Right-hand side of the rescaled collar flow on `[x, y, s, ξ, η, σ]`.
pub(crate) fn collar_rhs(model: &ManifoldModel, chart: &BoundaryChart, st: &[f64], d: &mut [f64]) {
    let n = model.dim;
    let m = n - 1;
    let x = st[0];
    let y = &st[1..n];
    let xi = st[n + 1];
    let eta = &st[n + 2..n + 2 + m];
    let sigma = st[2 * n + 1];
    let cs = CollarScalar::eval(model, chart, x, y);
    let eta2: f64 = eta.iter().map(|e| e * e).sum();
    let mu2 = cs.mu * cs.mu;
    let h = eta2 / cs.mu;
    let hx = -eta2 * cs.mu_x / mu2;
    match model.kind {
        GeometryKind::Scattering => {
            d[0] = -2.0 * sigma - 2.0 * x * x * xi;
            for j in 0..m {
                d[1 + j] = -2.0 * eta[j] / cs.mu;
                d[n + 2 + j] = -eta2 * cs.mu_y[j] / mu2;
            }
            d[n] = -2.0 * xi;
            d[n + 1] = 2.0 * x * xi * xi + hx;
        }
        GeometryKind::AsympHyperbolic => {
            d[0] = -2.0 * (sigma + x * xi);
            for j in 0..m {
                d[1 + j] = -2.0 * x * eta[j] / cs.mu;
                d[n + 2 + j] = -x * eta2 * cs.mu_y[j] / mu2;
            }
            d[n] = -2.0 * xi;
            d[n + 1] = xi * xi + h + x * hx;
        }
    }
    d[2 * n + 1] = 0.0;
}

/// Characteristic function `p` at a packed collar state.
pub(crate) fn collar_p(model: &ManifoldModel, chart: &BoundaryChart, st: &[f64]) -> f64 {
    let n = model.dim;
    let x = st[0];
    let xi = st[n + 1];
    let sigma = st[2 * n + 1];
    let cs = CollarScalar::eval(model, chart, x, &st[1..n]);
    let eta2: f64 = st[n + 2..2 * n + 1].iter().map(|e| e * e).sum();
    let h = eta2 / cs.mu;
    match model.kind {
        GeometryKind::Scattering => -2.0 * xi * sigma - x * x * xi * xi - h,
        GeometryKind::AsympHyperbolic => -(2.0 * xi * sigma + x * xi * xi + x * h),
    }
}

/// Characteristic function `p` of a collar phase state.
pub fn characteristic(model: &ManifoldModel, boundary: &BoundaryChart, state: &PhaseState) -> Result<f64> {
    if state.chart() != Chart::Collar {
        return Err(Error::InvalidArgument("characteristic function is defined on collar states".into()));
    }
    Ok(collar_p(model, boundary, &pack_collar(state)))
}

fn pack_collar(state: &PhaseState) -> Vec<f64> {
    let mut v = state.base.coords.clone();
    v.push(state.s);
    v.extend_from_slice(&state.momentum);
    v.push(state.sigma);
    v
}

/// Hamilton vector field at a phase state.
///
/// Interior states return `(ż, ζ̇, ṫ)`; collar states return
/// `(ẋ, ẏ, ṡ, ξ̇, η̇, σ̇)` of the rescaled flow. `boundary` fixes the
/// boundary chart of collar states and is ignored otherwise.
pub fn hamilton_rhs(model: &ManifoldModel, state: &PhaseState, boundary: &BoundaryChart) -> Result<Vec<f64>> {
    let n = model.dim;
    if state.base.coords.len() != n || state.momentum.len() != n {
        return Err(Error::ChartInvariantViolated("state length does not match model dimension".into()));
    }
    match state.chart() {
        Chart::Interior => {
            let mut y = state.base.coords.clone();
            y.extend_from_slice(&state.momentum);
            y.push(state.t);
            if linalg::norm(&state.momentum) == 0.0 {
                return Err(Error::ChartInvariantViolated("zero covector".into()));
            }
            let mut d = vec![0.0; interior_len(n)];
            interior_rhs(model, &y, &mut d)?;
            Ok(d)
        }
        Chart::Collar => {
            boundary.check_model(model)?;
            let st = pack_collar(state);
            if !(st[0] >= 0.0) || st.iter().any(|v| !v.is_finite()) {
                return Err(Error::ChartInvariantViolated("collar state needs finite data with x >= 0".into()));
            }
            let p = collar_p(model, boundary, &st);
            let scale = state.sigma * state.sigma + linalg::dot(&state.momentum, &state.momentum);
            if p.abs() > 1e-6 * scale.max(1e-300) {
                return Err(Error::ChartInvariantViolated(format!("characteristic residual p = {p:e}")));
            }
            let mut d = vec![0.0; collar_len(n)];
            collar_rhs(model, boundary, &st, &mut d);
            Ok(d)
        }
    }
}

/// Sojourn function `t - 1/x` or `t + log x`.
fn sojourn_of(kind: GeometryKind, t: f64, x: f64) -> f64 {
    match kind {
        GeometryKind::Scattering => t - 1.0 / x,
        GeometryKind::AsympHyperbolic => t + x.ln(),
    }
}

fn time_of(kind: GeometryKind, s: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    match kind {
        GeometryKind::Scattering => s + 1.0 / x,
        GeometryKind::AsympHyperbolic => s - x.ln(),
    }
}

/// `dx/dparam` of an interior state.
fn interior_xdot(model: &ManifoldModel, y: &[f64], dy: &[f64]) -> f64 {
    let n = model.dim;
    match model.kind {
        GeometryKind::Scattering => {
            let r = linalg::norm(&y[..n]);
            -linalg::dot(&y[..n], &dy[..n]) / (r * r * r)
        }
        GeometryKind::AsympHyperbolic => dy[0],
    }
}

/// Moves an interior state `[z, ζ, t]` into the collar with boundary chart `chart`.
///
/// The collar covector is minus the pulled-back `ζ`, with `σ = |ζ|_g` and
/// `ξ ↦ ξ - σ/x²` (scattering) or `ξ ↦ ξ - σ/x` (AH).
pub(crate) fn to_collar(model: &ManifoldModel, y: &[f64], chart: &BoundaryChart) -> Result<Vec<f64>> {
    let n = model.dim;
    let md = interior_metric_data(model, &y[..n])?;
    let sigma = md.covector_norm2(&y[n..2 * n]).sqrt();
    let cp = CotangentPoint {
        point: ChartPoint {
            chart: Chart::Interior,
            coords: y[..n].to_vec(),
        },
        covector: y[n..2 * n].to_vec(),
    };
    let c = chart_transition(model, &cp, chart)?;
    let x = c.point.coords[0];
    let t = y[2 * n];
    let mut st = Vec::with_capacity(collar_len(n));
    st.extend_from_slice(&c.point.coords);
    st.push(sojourn_of(model.kind, t, x));
    let xi = -c.covector[0];
    st.push(match model.kind {
        GeometryKind::Scattering => xi - sigma / (x * x),
        GeometryKind::AsympHyperbolic => xi - sigma / x,
    });
    for v in &c.covector[1..] {
        st.push(-v);
    }
    st.push(sigma);
    Ok(st)
}

/// Boundary chart used for the collar segment entered at interior point `z`.
pub(crate) fn entry_chart(model: &ManifoldModel, z: &[f64]) -> BoundaryChart {
    match model.kind {
        GeometryKind::Scattering => BoundaryChart::centered_at(&z[..model.dim], model.dim),
        GeometryKind::AsympHyperbolic => BoundaryChart::Flat { dim: model.dim },
    }
}

fn interior_state(model: &ManifoldModel, y: &[f64], param: f64) -> PhaseState {
    let n = model.dim;
    let x = model.boundary_x(&y[..n]);
    let sigma = interior_metric_data(model, &y[..n])
        .map(|m| m.covector_norm2(&y[n..2 * n]).sqrt())
        .unwrap_or(f64::NAN);
    PhaseState {
        base: ChartPoint {
            chart: Chart::Interior,
            coords: y[..n].to_vec(),
        },
        momentum: y[n..2 * n].to_vec(),
        s: sojourn_of(model.kind, y[2 * n], x),
        sigma,
        param,
        t: y[2 * n],
    }
}

fn collar_state(model: &ManifoldModel, st: &[f64], param: f64) -> PhaseState {
    let n = model.dim;
    let x = st[0];
    PhaseState {
        base: ChartPoint {
            chart: Chart::Collar,
            coords: st[..n].to_vec(),
        },
        momentum: st[n + 1..2 * n + 1].to_vec(),
        s: st[n],
        sigma: st[2 * n + 1],
        param,
        t: time_of(model.kind, st[n], x),
    }
}

/// Integrates the forward geodesic from `(z, ζ)` until it reaches the boundary.
///
/// `zeta` is normally a unit covector; other lengths are accepted and simply
/// rescale the fibre data of the limit.
pub fn integrate_geodesic(model: &ManifoldModel, z: &[f64], zeta: &[f64], opts: &FlowOptions) -> Result<GeodesicPath> {
    let n = model.dim;
    if z.len() != n || zeta.len() != n {
        return Err(Error::InvalidArgument("point and covector must have the model dimension".into()));
    }
    let md = interior_metric_data(model, z)?;
    let speed = md.covector_norm2(zeta).sqrt();
    if !(speed > 0.0) || !speed.is_finite() {
        return Err(Error::ChartInvariantViolated("initial covector must be nonzero".into()));
    }
    let mut y0 = z.to_vec();
    y0.extend_from_slice(zeta);
    y0.push(0.0);

    let x0 = model.collar_x0;
    let rhs = |_: f64, y: &[f64], d: &mut [f64]| {
        if interior_rhs(model, y, d).is_err() {
            d.iter_mut().for_each(|v| *v = f64::NAN);
        }
    };
    let switch = |_: f64, y: &[f64]| -> f64 {
        let mut d = vec![0.0; y.len()];
        if interior_rhs(model, y, &mut d).is_err() {
            return f64::NAN;
        }
        let x = model.boundary_x(&y[..n]);
        (x - x0).max(interior_xdot(model, y, &d) / speed)
    };

    let trap_t = opts.trap_factor * model.diameter_scale(z);
    let t_budget = trap_t.min(opts.max_time);
    let lambda_budget = t_budget / speed;

    let mut d0 = vec![0.0; y0.len()];
    interior_rhs(model, &y0, &mut d0)?;
    let already = switch(0.0, &y0) <= 0.0;

    let mut samples = Vec::new();
    let interior_seg = if already {
        samples.push(interior_state(model, &y0, 0.0));
        None
    } else {
        let sol = ode::integrate(rhs, 0.0, &y0, lambda_budget, &opts.ode, Some((switch, Crossing::Falling)))?;
        for st in &sol.steps {
            samples.push(interior_state(model, st.start(), st.t0));
        }
        samples.push(interior_state(model, &sol.y_end, sol.t_end));
        Some(Segment {
            chart: Chart::Interior,
            boundary: None,
            solution: sol,
        })
    };

    let (y_sw, lam_sw) = match &interior_seg {
        None => (y0.clone(), 0.0),
        Some(seg) if seg.solution.event_hit => (seg.solution.y_end.clone(), seg.solution.t_end),
        Some(seg) => {
            let status = if t_budget >= trap_t { PathStatus::Trapped } else { PathStatus::MaxTime };
            let t_of_param = samples.iter().map(|s| (s.param, s.t)).collect();
            return Ok(GeodesicPath {
                samples,
                status,
                t_of_param,
                interior: Some(seg.clone()),
                collar: None,
                dim: n,
                kind: model.kind,
                limit_tol: opts.limit_tol,
            });
        }
    };

    let chart = entry_chart(model, &y_sw[..n]);
    let c0 = to_collar(model, &y_sw, &chart)?;
    let sigma = c0[2 * n + 1];
    let crhs = |_: f64, st: &[f64], d: &mut [f64]| collar_rhs(model, &chart, st, d);
    let hit = |_: f64, st: &[f64]| st[0];
    let collar_budget = lam_sw + 1e3 * (1.0 + c0[0]) / sigma;
    let sol = ode::integrate(crhs, lam_sw, &c0, collar_budget, &opts.ode, Some((hit, Crossing::Falling)))?;
    let mut collar_samples: Vec<PhaseState> = sol.steps.iter().map(|st| collar_state(model, st.start(), st.t0)).collect();
    let mut last = sol.y_end.clone();
    let status = if sol.event_hit {
        last[0] = 0.0;
        PathStatus::ReachedBoundary
    } else {
        PathStatus::MaxTime
    };
    collar_samples.push(collar_state(model, &last, sol.t_end));
    samples.extend(collar_samples);
    let t_of_param = samples.iter().map(|s| (s.param, s.t)).collect();
    Ok(GeodesicPath {
        samples,
        status,
        t_of_param,
        interior: interior_seg,
        collar: Some(Segment {
            chart: Chart::Collar,
            boundary: Some(chart),
            solution: sol,
        }),
        dim: n,
        kind: model.kind,
        limit_tol: opts.limit_tol,
    })
}

impl GeodesicPath {
    pub fn final_state(&self) -> &PhaseState {
        self.samples.last().expect("paths have at least one sample")
    }

    /// Boundary chart of the collar segment.
    pub fn boundary_chart(&self) -> Option<&BoundaryChart> {
        self.collar.as_ref().and_then(|c| c.boundary.as_ref())
    }

    /// Packed collar state at collar parameter `param`.
    pub fn collar_packed_at(&self, param: f64) -> Option<Vec<f64>> {
        self.collar.as_ref().map(|c| c.solution.eval(param))
    }

    /// Collar parameter at which `x` first falls to `target`.
    pub fn collar_param_at_x(&self, target: f64) -> Option<f64> {
        let seg = self.collar.as_ref()?;
        let sol = &seg.solution;
        let x_at = |t: f64| sol.eval(t)[0];
        let (mut a, mut b) = (sol.t_start(), sol.t_end);
        if x_at(a) < target || x_at(b) > target {
            return None;
        }
        // find the step containing the crossing, then bisect
        for st in &sol.steps {
            let t1 = st.t1().min(sol.t_end);
            if x_at(st.t0) >= target && x_at(t1) <= target {
                a = st.t0;
                b = t1;
                break;
            }
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if x_at(m) > target {
                a = m;
            } else {
                b = m;
            }
            if (b - a).abs() <= 1e-15 * b.abs().max(1.0) {
                break;
            }
        }
        Some(0.5 * (a + b))
    }

    /// Largest deviation of `p` from zero over the collar samples.
    pub fn p_drift(&self, model: &ManifoldModel) -> f64 {
        let Some(chart) = self.boundary_chart() else { return 0.0 };
        self.collar
            .as_ref()
            .map(|seg| {
                let mut worst: f64 = 0.0;
                for st in &seg.solution.steps {
                    worst = worst.max(collar_p(model, chart, st.start()).abs());
                }
                worst.max(collar_p(model, chart, &seg.solution.y_end).abs())
            })
            .unwrap_or(0.0)
    }

    /// Largest deviation of `σ` from its value at collar entry.
    pub fn sigma_drift(&self) -> f64 {
        let collar: Vec<&PhaseState> = self.samples.iter().filter(|s| s.chart() == Chart::Collar).collect();
        let Some(first) = collar.first() else { return 0.0 };
        collar.iter().map(|s| (s.sigma - first.sigma).abs()).fold(0.0, f64::max)
    }

    /// Largest relative deviation of `|ζ|_g` over the interior samples.
    pub fn speed_drift(&self) -> f64 {
        let interior: Vec<&PhaseState> = self.samples.iter().filter(|s| s.chart() == Chart::Interior).collect();
        let Some(first) = interior.first() else { return 0.0 };
        interior
            .iter()
            .map(|s| ((s.sigma - first.sigma) / first.sigma).abs())
            .fold(0.0, f64::max)
    }

    /// `dx/dparam` at the boundary event.
    pub fn exit_rate(&self, model: &ManifoldModel) -> Option<f64> {
        let seg = self.collar.as_ref()?;
        let chart = seg.boundary.as_ref()?;
        let mut d = vec![0.0; seg.solution.y_end.len()];
        let mut st = seg.solution.y_end.clone();
        st[0] = 0.0;
        collar_rhs(model, chart, &st, &mut d);
        Some(d[0])
    }
}

/// Reads `(s, y, σ, η)` at the boundary event of a path.
///
/// `err` compares the event values of `s` and `y` with a three-level
/// Richardson extrapolation from `x = x₀/32, x₀/64, x₀/128`.
pub fn boundary_limits(model: &ManifoldModel, path: &GeodesicPath) -> Result<BoundaryLimit> {
    if path.status != PathStatus::ReachedBoundary {
        return Err(Error::NotAtBoundary(format!("path status {:?}", path.status)));
    }
    let seg = path
        .collar
        .as_ref()
        .ok_or_else(|| Error::NotAtBoundary("path has no collar segment".into()))?;
    let chart = seg.boundary.as_ref().expect("collar segments carry a boundary chart");
    let n = model.dim;
    let m = n - 1;
    let end = &seg.solution.y_end;
    let yc = &end[1..n];
    let s = end[n];
    let sigma = end[2 * n + 1];
    let eta_c = &end[n + 2..2 * n + 1];

    // the expansion in x has coefficients growing with the impact parameter |η|/σ
    let impact = eta_c.iter().map(|v| v * v).sum::<f64>().sqrt() / sigma.abs().max(1e-300);
    let x_top = model.collar_x0.min(path.collar_packed_at(seg.solution.t_start()).map(|v| v[0]).unwrap_or(0.0))
        / (1.0 + impact).powi(2);
    let mut levels = Vec::new();
    for k in 5..8 {
        let xk = x_top / f64::powi(2.0, k);
        if let Some(lam) = path.collar_param_at_x(xk) {
            levels.push(path.collar_packed_at(lam).expect("collar segment"));
        }
    }
    let err = if levels.len() == 3 {
        let mut e: f64 = 0.0;
        for idx in std::iter::once(n).chain(1..n) {
            let (v1, v2, v3) = (levels[0][idx], levels[1][idx], levels[2][idx]);
            let r1 = 2.0 * v2 - v1;
            let r2 = 2.0 * v3 - v2;
            let rich = (4.0 * r2 - r1) / 3.0;
            let val = if idx == n { s } else { end[idx] };
            e = e.max((rich - val).abs());
        }
        e
    } else {
        0.0
    };

    let (y, eta) = match model.kind {
        GeometryKind::Scattering => {
            let (w, dw) = chart.embed(yc);
            let (c, _) = chart.conformal_factor(yc);
            let mut eta = vec![0.0; n];
            for j in 0..m {
                for i in 0..n {
                    eta[i] += eta_c[j] / c * dw[j][i];
                }
            }
            (w[..n].to_vec(), eta)
        }
        GeometryKind::AsympHyperbolic => (yc.to_vec(), eta_c.to_vec()),
    };
    let lim = BoundaryLimit { s, y, sigma, eta, err };
    if err > path.limit_tol * sigma.abs().max(1.0) {
        return Err(Error::IntegratorFailure(format!("boundary limit inconsistent: err = {err:e}")));
    }
    Ok(lim)
}

/// Boundary limit of the geodesic from `(z, ζ)`.
///
/// The path is integrated from the unit covector `ζ/|ζ|`, and `σ` and `η`
/// are scaled back by `|ζ|`, so the result is homogeneous of degree one in
/// `ζ` up to rounding.
pub fn sojourn_limit(model: &ManifoldModel, z: &[f64], zeta: &[f64], opts: &FlowOptions) -> Result<BoundaryLimit> {
    let norm = interior_metric(model, z)?.metric.covector_norm2(zeta).sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidArgument(format!("covector {zeta:?} has no direction")));
    }
    let unit: Vec<f64> = zeta.iter().map(|v| v / norm).collect();
    let path = integrate_geodesic(model, z, &unit, opts)?;
    if path.status == PathStatus::Trapped {
        return Err(Error::Trapped);
    }
    let mut lim = boundary_limits(model, &path)?;
    lim.sigma *= norm;
    lim.err *= norm;
    for e in &mut lim.eta {
        *e *= norm;
    }
    Ok(lim)
}
