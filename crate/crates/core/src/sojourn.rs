//! Geodesic branches from an interior point to a boundary point.
//!
//! Directions at `z` are unit vectors `u` of an orthonormal coframe, so the
//! unit cosphere `S*_z` is the round sphere in `u`. The boundary map
//! `u ↦ y(u)` is inverted by multistart Newton shooting; each branch carries
//! its sojourn time, the Jacobian `|∂y/∂u|` measured in `h₀`, and the number
//! of conjugate points along it.

use crate::error::{Error, Result};
use crate::flow::{
    boundary_limits, collar_len, collar_rhs, integrate_geodesic, interior_len, interior_rhs, to_collar,
    BoundaryLimit, CoFrame, FlowOptions, PathStatus,
};
use crate::geometry::{curvature_operator, interior_metric, BoundaryChart, GeometryKind, ManifoldModel};
use crate::linalg::{self, Vec3};
use crate::ode::{self, Crossing, OdeOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Threshold on `|det ∂y/∂u|` below which a branch is degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;

/// One geodesic from `z` to the target boundary point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub z: Vec<f64>,
    /// Initial unit covector `ζ̂`.
    pub dir: Vec<f64>,
    /// Coframe direction `u` with `ζ̂ = L u`.
    pub u: Vec<f64>,
    pub limit: BoundaryLimit,
    pub jacobian: f64,
    pub jacobian_err: f64,
    pub conj_count: usize,
    pub nondegenerate: bool,
    pub newton_residual: f64,
    /// Residual history of the Newton iteration.
    pub newton_history: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchMeta {
    pub starts: usize,
    /// Starts that were local minima of the boundary distance and seeded Newton.
    pub seeds: usize,
    pub converged: usize,
    pub deduped: usize,
    pub failed_starts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSet {
    pub z: Vec<f64>,
    pub y_target: Vec<f64>,
    pub branches: Vec<Branch>,
    pub meta: SearchMeta,
}

/// Settings for branch search and per-branch diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    /// Number of multistart directions; defaults to 64 (n = 2) or 256 (n = 3).
    pub starts: Option<usize>,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub newton_fd_step: f64,
    pub dedupe_radius: f64,
    pub flow: FlowOptions,
    pub jacobian: JacobianOptions,
    pub conjugate: ConjugateOptions,
    /// Compute conjugate counts for every branch.
    pub with_conjugates: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            starts: None,
            newton_tol: 1e-9,
            max_newton: 40,
            newton_fd_step: 1e-6,
            dedupe_radius: 1e-4,
            flow: FlowOptions {
                ode: OdeOptions {
                    rtol: 1e-12,
                    atol: 1e-14,
                    ..OdeOptions::default()
                },
                ..FlowOptions::default()
            },
            jacobian: JacobianOptions::default(),
            conjugate: ConjugateOptions::default(),
            with_conjugates: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianOptions {
    /// Base angular step of the central differences.
    pub step: f64,
    /// Integrator tolerances used for the differenced geodesics.
    pub rtol: f64,
    pub atol: f64,
    /// Largest accepted relative disagreement between the two Richardson levels.
    pub max_rel_err: f64,
}

impl Default for JacobianOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            rtol: 1e-13,
            atol: 1e-15,
            max_rel_err: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateOptions {
    /// Largest arclength step of the Jacobi integration; the count is repeated at half this step.
    pub max_step: f64,
    /// Scattering paths are followed until `x` falls to this value.
    pub x_stop: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for ConjugateOptions {
    fn default() -> Self {
        Self {
            max_step: 0.5,
            x_stop: 0.01,
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

/// Finite-difference Jacobian estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobianEstimate {
    pub value: f64,
    /// Relative disagreement between the Richardson value and the finer level.
    pub rel_err: f64,
    pub step: f64,
}

/// Per-branch outcome of [`nondegeneracy_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyEntry {
    pub index: usize,
    pub jacobian: f64,
    pub quadratic_newton: bool,
    pub nondegenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub entries: Vec<NondegeneracyEntry>,
    pub failing: Vec<usize>,
}

/// Tangent basis of `S^{n-1}` at `u`.
pub fn sphere_tangent_basis(u: &[f64], n: usize) -> Vec<Vec3> {
    linalg::orthonormal_complement(u, n)
}

/// Exponential map of the unit sphere at `u` applied to `Σ δ_a e_a`.
pub fn sphere_exp(u: &[f64], basis: &[Vec3], delta: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut v = vec![0.0; n];
    for (a, e) in basis.iter().enumerate() {
        for i in 0..n {
            v[i] += delta[a] * e[i];
        }
    }
    let th = linalg::norm(&v);
    if th == 0.0 {
        return u.to_vec();
    }
    let (s, c) = th.sin_cos();
    (0..n).map(|i| c * u[i] + s * v[i] / th).collect()
}

/// Quasi-uniform unit directions: equally spaced angles (n = 2) or a Fibonacci lattice (n = 3).
pub fn direction_grid(n: usize, count: usize) -> Vec<Vec<f64>> {
    match n {
        2 => (0..count)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let zc = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - zc * zc).sqrt();
                    let phi = golden * k as f64;
                    vec![r * phi.cos(), r * phi.sin(), zc]
                })
                .collect()
        }
    }
}

fn default_starts(n: usize) -> usize {
    if n == 2 {
        64
    } else {
        256
    }
}

/// Boundary limit of the geodesic leaving `z` in coframe direction `u`.
pub fn limit_for_direction(
    model: &ManifoldModel,
    z: &[f64],
    frame: &CoFrame,
    u: &[f64],
    opts: &FlowOptions,
) -> Result<BoundaryLimit> {
    let zeta = frame.covector(u);
    let path = integrate_geodesic(model, z, &zeta, opts)?;
    match path.status {
        PathStatus::ReachedBoundary => boundary_limits(model, &path),
        PathStatus::Trapped => Err(Error::Trapped),
        PathStatus::MaxTime => Err(Error::NotAtBoundary("time budget exhausted".into())),
    }
}

/// The map `S*_z → ∂X` sending a unit covector to the endpoint of its geodesic.
pub fn asymptotic_direction_map(model: &ManifoldModel, z: &[f64], dir: &[f64]) -> Result<Vec<f64>> {
    let path = integrate_geodesic(model, z, dir, &FlowOptions::default())?;
    match path.status {
        PathStatus::ReachedBoundary => Ok(boundary_limits(model, &path)?.y),
        PathStatus::Trapped => Err(Error::Trapped),
        PathStatus::MaxTime => Err(Error::NotAtBoundary("time budget exhausted".into())),
    }
}

/// Boundary distance between two limit points (angle on the sphere, Euclidean on `ℝ^{n-1}`).
pub fn boundary_distance(model: &ManifoldModel, a: &[f64], b: &[f64]) -> f64 {
    match model.kind {
        GeometryKind::Scattering => {
            let d: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            2.0 * (0.5 * d).min(1.0).asin()
        }
        GeometryKind::AsympHyperbolic => a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt(),
    }
}

/// Residual chart centred at the target.
struct TargetChart {
    chart: BoundaryChart,
    kind: GeometryKind,
    target: Vec<f64>,
}

impl TargetChart {
    fn new(model: &ManifoldModel, target: &[f64]) -> Result<Self> {
        let n = model.dim;
        match model.kind {
            GeometryKind::Scattering => {
                if target.len() != n {
                    return Err(Error::InvalidArgument("scattering targets are unit vectors in ℝⁿ".into()));
                }
                let l = linalg::norm(target);
                if !(l > 0.0) {
                    return Err(Error::InvalidArgument("target must be nonzero".into()));
                }
                let t: Vec<f64> = target.iter().map(|v| v / l).collect();
                Ok(Self {
                    chart: BoundaryChart::centered_at(&t, n),
                    kind: model.kind,
                    target: t,
                })
            }
            GeometryKind::AsympHyperbolic => {
                if target.len() != n - 1 {
                    return Err(Error::InvalidArgument("AH targets are points of ℝ^{n-1}".into()));
                }
                Ok(Self {
                    chart: BoundaryChart::Flat { dim: n },
                    kind: model.kind,
                    target: target.to_vec(),
                })
            }
        }
    }

    fn residual(&self, y: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            GeometryKind::Scattering => {
                let r = self.chart.coords_of(y)?;
                // stereographic coordinates are half-angles; rescale to angles near the centre
                Ok(match self.chart {
                    BoundaryChart::Stereographic { .. } => r.iter().map(|v| 2.0 * v).collect(),
                    _ => r,
                })
            }
            GeometryKind::AsympHyperbolic => Ok(y.iter().zip(&self.target).map(|(a, b)| a - b).collect()),
        }
    }
}

fn solve_small(a: &[Vec<f64>], b: &[f64]) -> Option<(Vec<f64>, f64)> {
    let m = b.len();
    let mut mat = linalg::ZERO_MAT;
    for i in 0..m {
        for j in 0..m {
            mat[i][j] = a[i][j];
        }
    }
    let d = linalg::det(&mat, m);
    let inv = linalg::inverse(&mat, m)?;
    let x = linalg::mat_vec(&inv, b, m);
    Some((x[..m].to_vec(), d))
}

struct NewtonOutcome {
    u: Vec<f64>,
    limit: BoundaryLimit,
    residual: f64,
    history: Vec<f64>,
}

fn newton_shoot(
    model: &ManifoldModel,
    z: &[f64],
    frame: &CoFrame,
    tc: &TargetChart,
    u0: &[f64],
    opts: &SearchOptions,
) -> Option<NewtonOutcome> {
    let n = model.dim;
    let m = n - 1;
    let eval = |u: &[f64]| -> Option<(BoundaryLimit, Vec<f64>)> {
        let lim = limit_for_direction(model, z, frame, u, &opts.flow).ok()?;
        let r = tc.residual(&lim.y).ok()?;
        Some((lim, r))
    };
    let mut u = u0.to_vec();
    let (mut lim, mut r) = eval(&u)?;
    let mut res = linalg::norm(&r);
    let mut history = vec![res];
    for _ in 0..opts.max_newton {
        // keep polishing below the tolerance while Newton still makes fast progress
        if res <= opts.newton_tol && (res <= 1e-3 * opts.newton_tol || history.len() > 1 && res > 1e-2 * history[history.len() - 2]) {
            break;
        }
        let basis = sphere_tangent_basis(&u, n);
        let h = opts.newton_fd_step;
        let mut jac = vec![vec![0.0; m]; m];
        for a in 0..m {
            let mut d = vec![0.0; m];
            d[a] = h;
            let up = sphere_exp(&u, &basis, &d);
            d[a] = -h;
            let um = sphere_exp(&u, &basis, &d);
            let (_, rp) = eval(&up)?;
            let (_, rm) = eval(&um)?;
            for i in 0..m {
                jac[i][a] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let (mut step, _) = solve_small(&jac, &neg)?;
        let len = linalg::norm(&step);
        if len > 0.3 {
            step.iter_mut().for_each(|v| *v *= 0.3 / len);
        }
        let mut accepted = false;
        for _ in 0..12 {
            let cand = sphere_exp(&u, &basis, &step);
            if let Some((l2, r2)) = eval(&cand) {
                let res2 = linalg::norm(&r2);
                if res2 < res {
                    u = cand;
                    lim = l2;
                    r = r2;
                    res = res2;
                    accepted = true;
                    break;
                }
            }
            step.iter_mut().for_each(|v| *v *= 0.5);
        }
        if !accepted {
            break;
        }
        history.push(res);
    }
    Some(NewtonOutcome {
        u,
        limit: lim,
        residual: res,
        history,
    })
}

/// Narrows a sign change of the angle residual to a width of 1e-3 and returns its midpoint.
#[allow(clippy::too_many_arguments)]
fn bisect_bracket(
    model: &ManifoldModel,
    z: &[f64],
    frame: &CoFrame,
    tc: &TargetChart,
    mut a: f64,
    mut b: f64,
    ra: f64,
    flow: &FlowOptions,
) -> Option<Vec<f64>> {
    let sa = ra.signum();
    while (b - a).abs() > 1e-3 {
        let m = 0.5 * (a + b);
        let l = limit_for_direction(model, z, frame, &[m.cos(), m.sin()], flow).ok()?;
        let r = tc.residual(&l.y).ok()?;
        if r[0].signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    let m = 0.5 * (a + b);
    Some(vec![m.cos(), m.sin()])
}

/// True when the step that first met `tol` contracted the residual superlinearly.
pub fn converged_quadratically(history: &[f64], tol: f64) -> bool {
    match history.iter().position(|&r| r <= tol) {
        None => false,
        Some(0) => true,
        Some(k) => history[k] <= 0.05 * history[k - 1],
    }
}

fn neighbours(dirs: &[Vec<f64>], n: usize) -> Vec<Vec<usize>> {
    let count = dirs.len();
    if n == 2 {
        return (0..count).map(|k| vec![(k + count - 1) % count, (k + 1) % count]).collect();
    }
    (0..count)
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..count)
                .filter(|&j| j != i)
                .map(|j| (-linalg::dot(&dirs[i], &dirs[j]), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0));
            d.iter().take(6).map(|p| p.1).collect()
        })
        .collect()
}

/// Finds all nondegenerate-looking geodesics from `z` to `y_target` by multistart shooting.
///
/// Starts whose boundary distance is a local minimum over the direction grid
/// seed Newton iterations; converged directions within `dedupe_radius` are
/// merged. Branches are returned sorted by direction.
pub fn find_branches(model: &ManifoldModel, z: &[f64], y_target: &[f64], opts: &SearchOptions) -> Result<BranchSet> {
    let n = model.dim;
    let frame = CoFrame::at(model, z)?;
    let tc = TargetChart::new(model, y_target)?;
    let count = opts.starts.unwrap_or_else(|| default_starts(n));
    let dirs = direction_grid(n, count);
    let probes: Vec<Option<(f64, Vec<f64>)>> = dirs
        .par_iter()
        .map(|u| {
            let l = limit_for_direction(model, z, &frame, u, &opts.flow).ok()?;
            let r = tc.residual(&l.y).ok();
            Some((boundary_distance(model, &l.y, &tc.target), r.unwrap_or_default()))
        })
        .collect();
    let dist: Vec<Option<f64>> = probes.iter().map(|p| p.as_ref().map(|p| p.0)).collect();
    let nb = neighbours(&dirs, n);
    let mut seeds: Vec<Vec<f64>> = (0..count)
        .filter(|&i| {
            let Some(di) = dist[i] else { return false };
            nb[i].iter().all(|&j| dist[j].map(|dj| di <= dj).unwrap_or(true))
        })
        .map(|i| dirs[i].clone())
        .collect();
    let mut brackets: Vec<(f64, f64, f64)> = Vec::new();
    if n == 2 {
        // roots closer than the grid spacing still show up as sign changes of the angle residual
        for i in 0..count {
            let j = (i + 1) % count;
            let (Some((di, ri)), Some((dj, rj))) = (&probes[i], &probes[j]) else { continue };
            if di.max(*dj) < 1.5 && ri.len() == 1 && rj.len() == 1 && ri[0] * rj[0] < 0.0 {
                let a0 = dirs[i][1].atan2(dirs[i][0]);
                let mut da = dirs[j][1].atan2(dirs[j][0]) - a0;
                if da < -std::f64::consts::PI {
                    da += 2.0 * std::f64::consts::PI;
                }
                brackets.push((a0, a0 + da, ri[0]));
            }
        }
    }
    let failed_starts = dist.iter().filter(|d| d.is_none()).count();

    let refined: Vec<Vec<f64>> = brackets
        .par_iter()
        .filter_map(|&(a, b, ra)| bisect_bracket(model, z, &frame, &tc, a, b, ra, &opts.flow))
        .collect();
    seeds.extend(refined);
    let outcomes: Vec<NewtonOutcome> = seeds
        .par_iter()
        .filter_map(|u| newton_shoot(model, z, &frame, &tc, u, opts))
        .filter(|o| o.residual <= opts.newton_tol)
        .collect();
    let converged = outcomes.len();

    let mut kept: Vec<NewtonOutcome> = Vec::new();
    for o in outcomes {
        let dup = kept.iter().position(|k| {
            let d: f64 = k.u.iter().zip(&o.u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            d < opts.dedupe_radius
        });
        match dup {
            Some(j) if kept[j].residual <= o.residual => {}
            Some(j) => kept[j] = o,
            None => kept.push(o),
        }
    }
    let deduped = converged - kept.len();
    if kept.is_empty() {
        return Err(Error::NoBranchFound(format!(
            "{count} starts, {} seeds, none converged",
            seeds.len()
        )));
    }
    kept.sort_by(|a, b| {
        a.u.iter()
            .zip(&b.u)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let branches: Vec<Branch> = kept
        .into_par_iter()
        .map(|o| build_branch(model, z, &frame, o, opts))
        .collect::<Result<Vec<_>>>()?;

    Ok(BranchSet {
        z: z.to_vec(),
        y_target: tc.target.clone(),
        branches,
        meta: SearchMeta {
            starts: count,
            seeds: seeds.len(),
            converged,
            deduped,
            failed_starts,
        },
    })
}

fn build_branch(model: &ManifoldModel, z: &[f64], frame: &CoFrame, o: NewtonOutcome, opts: &SearchOptions) -> Result<Branch> {
    let dir = frame.covector(&o.u);
    let (jacobian, jacobian_err) = match boundary_jacobian_with(model, z, &dir, &opts.jacobian) {
        Ok(j) => (j.value, j.rel_err),
        Err(Error::JacobianUnstable(e)) => (f64::NAN, e),
        Err(e) => return Err(e),
    };
    let quadratic = converged_quadratically(&o.history, opts.newton_tol);
    let nondegenerate = jacobian.is_finite() && jacobian > DEGENERACY_THRESHOLD && quadratic;
    let mut branch = Branch {
        z: z.to_vec(),
        dir,
        u: o.u,
        limit: o.limit,
        jacobian,
        jacobian_err,
        conj_count: 0,
        nondegenerate,
        newton_residual: o.residual,
        newton_history: o.history,
    };
    if opts.with_conjugates {
        branch.conj_count = conjugate_count_with(model, &branch, &opts.conjugate, &opts.flow)?;
    }
    Ok(branch)
}

/// Builds the branch leaving `z` along the unit covector `dir`, wherever it lands.
pub fn branch_from_direction(model: &ManifoldModel, z: &[f64], dir: &[f64], opts: &SearchOptions) -> Result<Branch> {
    let frame = CoFrame::at(model, z)?;
    let u = frame.direction_of(dir);
    let limit = limit_for_direction(model, z, &frame, &u, &opts.flow)?;
    let outcome = NewtonOutcome {
        u,
        limit,
        residual: 0.0,
        history: vec![0.0],
    };
    build_branch(model, z, &frame, outcome, opts)
}

/// `|det ∂y/∂ζ̂|` by central differences on `S*_z` with Richardson refinement.
pub fn boundary_jacobian(model: &ManifoldModel, z: &[f64], dir: &[f64]) -> Result<JacobianEstimate> {
    boundary_jacobian_with(model, z, dir, &JacobianOptions::default())
}

pub fn boundary_jacobian_with(
    model: &ManifoldModel,
    z: &[f64],
    dir: &[f64],
    opts: &JacobianOptions,
) -> Result<JacobianEstimate> {
    let n = model.dim;
    let m = n - 1;
    let frame = CoFrame::at(model, z)?;
    let u = frame.direction_of(dir);
    let flow = FlowOptions {
        ode: OdeOptions {
            rtol: opts.rtol,
            atol: opts.atol,
            ..OdeOptions::default()
        },
        limit_tol: 1e-4,
        ..FlowOptions::default()
    };
    let centre = limit_for_direction(model, z, &frame, &u, &flow)?;
    let chart = match model.kind {
        GeometryKind::Scattering => BoundaryChart::centered_at(&centre.y, n),
        GeometryKind::AsympHyperbolic => BoundaryChart::Flat { dim: n },
    };
    let basis = sphere_tangent_basis(&u, n);
    let level = |h: f64| -> Result<f64> {
        let mut cols = vec![vec![0.0; m]; m];
        for a in 0..m {
            let mut d = vec![0.0; m];
            d[a] = h;
            let yp = limit_for_direction(model, z, &frame, &sphere_exp(&u, &basis, &d), &flow)?.y;
            d[a] = -h;
            let ym = limit_for_direction(model, z, &frame, &sphere_exp(&u, &basis, &d), &flow)?.y;
            let cp = chart.coords_of(&yp)?;
            let cm = chart.coords_of(&ym)?;
            for i in 0..m {
                cols[a][i] = (cp[i] - cm[i]) / (2.0 * h);
            }
        }
        // chart metric at the centre is c(0) times the identity
        let (c, _) = chart.conformal_factor(&vec![0.0; m]);
        let mut gram = linalg::ZERO_MAT;
        for a in 0..m {
            for b in 0..m {
                gram[a][b] = c * linalg::dot(&cols[a], &cols[b]);
            }
        }
        Ok(linalg::det(&gram, m).max(0.0).sqrt())
    };
    let h = opts.step;
    let j1 = level(h)?;
    let j2 = level(0.5 * h)?;
    let value = (4.0 * j2 - j1) / 3.0;
    let rel_err = if value != 0.0 { ((value - j2) / value).abs() } else { (value - j2).abs() };
    if rel_err > opts.max_rel_err {
        return Err(Error::JacobianUnstable(rel_err));
    }
    Ok(JacobianEstimate { value, rel_err, step: h })
}

/// Directional derivative of `f` at `y` along `v` by a central difference.
fn directional<F: Fn(&[f64], &mut [f64])>(f: &F, y: &[f64], v: &[f64], out: &mut [f64], scratch: &mut [Vec<f64>; 3]) {
    let vn = linalg::norm(v);
    if vn == 0.0 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let eps = 6e-6 * (1.0 + linalg::norm(y)) / vn;
    let [yp, fp, fm] = scratch;
    for i in 0..y.len() {
        yp[i] = y[i] + eps * v[i];
    }
    f(yp, fp);
    for i in 0..y.len() {
        yp[i] = y[i] - eps * v[i];
    }
    f(yp, fm);
    for i in 0..out.len() {
        out[i] = (fp[i] - fm[i]) / (2.0 * eps);
    }
}

/// Integrates `[Y, V_1, .., V_k]` with `V' = DF(Y) V`.
fn variational_rhs<F: Fn(&[f64], &mut [f64])>(f: &F, base: usize, k: usize, st: &[f64], d: &mut [f64]) {
    let (y, vs) = st.split_at(base);
    f(y, &mut d[..base]);
    let mut scratch = [vec![0.0; base], vec![0.0; base], vec![0.0; base]];
    for a in 0..k {
        let v = &vs[a * base..(a + 1) * base];
        let mut out = vec![0.0; base];
        directional(f, y, v, &mut out, &mut scratch);
        d[base * (a + 1)..base * (a + 2)].copy_from_slice(&out);
    }
}

/// Boundary-map Jacobian from the linearised flow.
///
/// Variations of the initial direction are transported by the linearised
/// interior flow, pushed through the chart switch, transported by the
/// linearised rescaled flow and projected onto `x = 0` along the flow.
/// Returns `(|det|, signed det)`; the sign is the orientation of the map in
/// the coframe and collar charts.
pub fn variational_jacobian(model: &ManifoldModel, z: &[f64], dir: &[f64], flow: &FlowOptions) -> Result<(f64, f64)> {
    let n = model.dim;
    let m = n - 1;
    let frame = CoFrame::at(model, z)?;
    let u = frame.direction_of(dir);
    let basis = sphere_tangent_basis(&u, n);
    let zeta = frame.covector(&u);
    let bi = interior_len(n);
    let bc = collar_len(n);

    let base_path = integrate_geodesic(model, z, &zeta, flow)?;
    if base_path.status != PathStatus::ReachedBoundary {
        return Err(Error::Trapped);
    }
    let chart = base_path.boundary_chart().cloned().expect("collar chart");

    let fi = |y: &[f64], d: &mut [f64]| {
        if interior_rhs(model, y, d).is_err() {
            d.iter_mut().for_each(|v| *v = f64::NAN);
        }
    };
    let mut st = Vec::with_capacity(bi * n);
    st.extend_from_slice(z);
    st.extend_from_slice(&zeta);
    st.push(0.0);
    for e in &basis {
        let dz = frame.covector(&e[..n]);
        st.extend(std::iter::repeat(0.0).take(n));
        st.extend_from_slice(&dz);
        st.push(0.0);
    }

    let (y_sw, lam_sw) = match &base_path.interior {
        Some(seg) => {
            let lam_end = seg.solution.t_end;
            let rhs = |_: f64, s: &[f64], d: &mut [f64]| variational_rhs(&fi, bi, m, s, d);
            let sol = ode::integrate(rhs, 0.0, &st, lam_end, &flow.ode, None::<(fn(f64, &[f64]) -> f64, Crossing)>)?;
            (sol.y_end, lam_end)
        }
        None => (st, 0.0),
    };

    let tmap = |y: &[f64], out: &mut [f64]| match to_collar(model, y, &chart) {
        Ok(c) => out.copy_from_slice(&c),
        Err(_) => out.iter_mut().for_each(|v| *v = f64::NAN),
    };
    let mut cst = vec![0.0; bc * n];
    tmap(&y_sw[..bi], &mut cst[..bc]);
    let mut scratch = [vec![0.0; bi], vec![0.0; bc], vec![0.0; bc]];
    for a in 0..m {
        let v = &y_sw[bi * (a + 1)..bi * (a + 2)];
        let mut out = vec![0.0; bc];
        directional_map(&tmap, &y_sw[..bi], v, &mut out, &mut scratch);
        cst[bc * (a + 1)..bc * (a + 2)].copy_from_slice(&out);
    }

    let fc = |y: &[f64], d: &mut [f64]| collar_rhs(model, &chart, y, d);
    let rhs = |_: f64, s: &[f64], d: &mut [f64]| variational_rhs(&fc, bc, m, s, d);
    let hit = |_: f64, s: &[f64]| s[0];
    let budget = lam_sw + 1e3 * (1.0 + cst[0]) / cst[2 * n + 1];
    let sol = ode::integrate(rhs, lam_sw, &cst, budget, &flow.ode, Some((hit, Crossing::Falling)))?;
    if !sol.event_hit {
        return Err(Error::NotAtBoundary("linearised flow did not reach x = 0".into()));
    }
    let end = &sol.y_end;
    let mut f_end = vec![0.0; bc];
    fc(&end[..bc], &mut f_end);
    let mut cols = vec![vec![0.0; m]; m];
    for a in 0..m {
        let v = &end[bc * (a + 1)..bc * (a + 2)];
        let tau = v[0] / f_end[0];
        for j in 0..m {
            cols[a][j] = v[1 + j] - tau * f_end[1 + j];
        }
    }
    let yb = &end[1..n];
    let (c, _) = chart.conformal_factor(yb);
    let mut mat = linalg::ZERO_MAT;
    for a in 0..m {
        for j in 0..m {
            mat[j][a] = c.sqrt() * cols[a][j];
        }
    }
    let signed = linalg::det(&mat, m);
    Ok((signed.abs(), signed))
}

fn directional_map<F: Fn(&[f64], &mut [f64])>(
    f: &F,
    y: &[f64],
    v: &[f64],
    out: &mut [f64],
    scratch: &mut [Vec<f64>; 3],
) {
    let vn = linalg::norm(v);
    if vn == 0.0 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let eps = 6e-6 * (1.0 + linalg::norm(y)) / vn;
    let [yp, fp, fm] = scratch;
    for i in 0..y.len() {
        yp[i] = y[i] + eps * v[i];
    }
    f(yp, fp);
    for i in 0..y.len() {
        yp[i] = y[i] - eps * v[i];
    }
    f(yp, fm);
    for i in 0..out.len() {
        out[i] = (fp[i] - fm[i]) / (2.0 * eps);
    }
}

/// Number of conjugate points along a branch.
pub fn conjugate_count(model: &ManifoldModel, branch: &Branch) -> Result<usize> {
    conjugate_count_with(model, branch, &ConjugateOptions::default(), &FlowOptions::default())
}

/// Conjugate count with explicit settings; the count is repeated with half
/// the maximal step and must agree.
pub fn conjugate_count_with(
    model: &ManifoldModel,
    branch: &Branch,
    opts: &ConjugateOptions,
    flow: &FlowOptions,
) -> Result<usize> {
    let coarse = jacobi_zero_count(model, &branch.z, &branch.dir, opts, flow, opts.max_step)?;
    let fine = jacobi_zero_count(model, &branch.z, &branch.dir, opts, flow, 0.5 * opts.max_step)?;
    if coarse != fine {
        return Err(Error::CountUnstable { coarse, fine });
    }
    Ok(coarse)
}

/// Trace of `det[γ' | J_1 .. J_{n-1}]` along the Jacobi integration.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiTrace {
    /// `(arclength, det)` at accepted steps.
    pub samples: Vec<(f64, f64)>,
    /// Zeros found by sign changes along the integrated segment.
    pub interior_zeros: usize,
    /// Zeros predicted beyond the end by straight-line extrapolation (scattering only).
    pub extrapolated_zeros: usize,
}

/// Integrates the Jacobi equation `J'' + R(J, γ')γ' = 0` with `J(0) = 0`,
/// `J'(0)` an orthonormal frame of the normal space, and records `det[γ' | J]`.
pub fn jacobi_trace(
    model: &ManifoldModel,
    z: &[f64],
    dir: &[f64],
    opts: &ConjugateOptions,
    flow: &FlowOptions,
    max_step: f64,
) -> Result<JacobiTrace> {
    let n = model.dim;
    let m = n - 1;
    let frame = CoFrame::at(model, z)?;
    let u = frame.direction_of(dir);
    let zeta = frame.covector(&u);
    let basis = sphere_tangent_basis(&u, n);
    // layout: z (n), ζ (n), J (m·n), W (m·n)
    let len = 2 * n + 2 * m * n;
    let mut y0 = vec![0.0; len];
    y0[..n].copy_from_slice(z);
    y0[n..2 * n].copy_from_slice(&zeta);
    for (a, e) in basis.iter().enumerate() {
        let w = frame.velocity(&e[..n]);
        y0[2 * n + m * n + a * n..2 * n + m * n + (a + 1) * n].copy_from_slice(&w);
    }
    let failed = std::cell::Cell::new(None::<Error>);
    let rhs = |_: f64, y: &[f64], d: &mut [f64]| {
        let res = (|| -> Result<()> {
            let im = interior_metric(model, &y[..n])?;
            let md = &im.metric;
            let zeta = &y[n..2 * n];
            let v = linalg::mat_vec(&md.inverse, zeta, n);
            d[..n].copy_from_slice(&v[..n]);
            for k in 0..n {
                d[n + k] = 0.5 * linalg::quad_form(&md.d_components[k], &v, n);
            }
            let curv = curvature_operator(model, &y[..n])?;
            let g = &im.christoffel;
            for a in 0..m {
                let j = &y[2 * n + a * n..2 * n + (a + 1) * n];
                let w = &y[2 * n + m * n + a * n..2 * n + m * n + (a + 1) * n];
                let rj = curv.apply(j, &v, &v);
                for i in 0..n {
                    let mut gj = 0.0;
                    let mut gw = 0.0;
                    for p in 0..n {
                        for q in 0..n {
                            gj += g[i][p][q] * v[p] * j[q];
                            gw += g[i][p][q] * v[p] * w[q];
                        }
                    }
                    d[2 * n + a * n + i] = w[i] - gj;
                    d[2 * n + m * n + a * n + i] = -gw - rj[i];
                }
            }
            Ok(())
        })();
        if let Err(e) = res {
            failed.set(Some(e));
            d.iter_mut().for_each(|v| *v = f64::NAN);
        }
    };
    let x0 = model.collar_x0;
    let x_stop = match model.kind {
        GeometryKind::Scattering => opts.x_stop.min(x0),
        GeometryKind::AsympHyperbolic => x0,
    };
    let stop = |_: f64, y: &[f64]| -> f64 {
        let x = model.boundary_x(&y[..n]);
        let im = match crate::geometry::interior_metric_data(model, &y[..n]) {
            Ok(m) => m,
            Err(_) => return f64::NAN,
        };
        let v = linalg::mat_vec(&im.inverse, &y[n..2 * n], n);
        let xdot = match model.kind {
            GeometryKind::Scattering => {
                let r = linalg::norm(&y[..n]);
                -linalg::dot(&y[..n], &v[..n]) / (r * r * r)
            }
            GeometryKind::AsympHyperbolic => v[0],
        };
        (x - x_stop).max(xdot)
    };
    let ode_opts = OdeOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        max_step,
        ..flow.ode
    };
    let budget = flow.trap_factor * model.diameter_scale(z) / (x_stop / x0).min(1.0);
    let sol = if stop(0.0, &y0) <= 0.0 {
        None
    } else {
        let s = ode::integrate(rhs, 0.0, &y0, budget, &ode_opts, Some((stop, Crossing::Falling)));
        if let Some(e) = failed.take() {
            return Err(match e {
                Error::CurvatureUnavailable(_) => e,
                other => Error::CurvatureUnavailable(other.to_string()),
            });
        }
        let s = s?;
        if !s.event_hit {
            return Err(Error::Trapped);
        }
        Some(s)
    };

    let det_of = |y: &[f64]| -> f64 {
        let md = crate::geometry::interior_metric_data(model, &y[..n]).expect("metric along path");
        let v = linalg::mat_vec(&md.inverse, &y[n..2 * n], n);
        let mut mat = linalg::ZERO_MAT;
        for i in 0..n {
            mat[i][0] = v[i];
            for a in 0..m {
                mat[i][a + 1] = y[2 * n + a * n + i];
            }
        }
        linalg::det(&mat, n)
    };
    let mut samples = Vec::new();
    let y_end = match &sol {
        Some(s) => {
            for st in &s.steps {
                samples.push((st.t0, det_of(st.start())));
            }
            samples.push((s.t_end, det_of(&s.y_end)));
            s.y_end.clone()
        }
        None => {
            samples.push((0.0, 0.0));
            y0.clone()
        }
    };
    let mut interior_zeros = 0;
    // det vanishes at the start; begin counting after it becomes nonzero
    let mut last_sign = 0.0;
    for &(_, d) in samples.iter().skip(1) {
        if d == 0.0 {
            continue;
        }
        let sg = d.signum();
        if last_sign != 0.0 && sg != last_sign {
            interior_zeros += 1;
        }
        last_sign = sg;
    }

    let extrapolated_zeros = if model.kind == GeometryKind::Scattering && sol.is_some() {
        let md = crate::geometry::interior_metric_data(model, &y_end[..n])?;
        let v = linalg::mat_vec(&md.inverse, &y_end[n..2 * n], n);
        let det_tau = |tau: f64| -> f64 {
            let mut mat = linalg::ZERO_MAT;
            for i in 0..n {
                mat[i][0] = v[i];
                for a in 0..m {
                    mat[i][a + 1] = y_end[2 * n + a * n + i] + tau * y_end[2 * n + m * n + a * n + i];
                }
            }
            linalg::det(&mat, n)
        };
        let scale = linalg::norm(&y_end[..n]);
        let d0 = det_tau(0.0);
        let roots = if m == 1 {
            let d1 = det_tau(scale) - d0;
            linalg::real_roots_quadratic(d0, d1 / scale, 0.0)
        } else {
            let dp = det_tau(scale);
            let dm = det_tau(-scale);
            let c2 = (dp + dm - 2.0 * d0) / (2.0 * scale * scale);
            let c1 = (dp - dm) / (2.0 * scale);
            linalg::real_roots_quadratic(d0, c1, c2)
        };
        roots.iter().filter(|&&t| t > 0.0).count()
    } else {
        0
    };
    Ok(JacobiTrace {
        samples,
        interior_zeros,
        extrapolated_zeros,
    })
}

fn jacobi_zero_count(
    model: &ManifoldModel,
    z: &[f64],
    dir: &[f64],
    opts: &ConjugateOptions,
    flow: &FlowOptions,
    max_step: f64,
) -> Result<usize> {
    let tr = jacobi_trace(model, z, dir, opts, flow, max_step)?;
    Ok(tr.interior_zeros + tr.extrapolated_zeros)
}

/// Finds the branches to `y_target` and reports which are degenerate.
pub fn nondegeneracy_check(
    model: &ManifoldModel,
    z: &[f64],
    y_target: &[f64],
    opts: &SearchOptions,
) -> Result<NondegeneracyReport> {
    Ok(nondegeneracy_report(&find_branches(model, z, y_target, opts)?))
}

/// Flags branches whose boundary map is not locally invertible.
pub fn nondegeneracy_report(set: &BranchSet) -> NondegeneracyReport {
    let entries: Vec<NondegeneracyEntry> = set
        .branches
        .iter()
        .enumerate()
        .map(|(index, b)| NondegeneracyEntry {
            index,
            jacobian: b.jacobian,
            quadratic_newton: converged_quadratically(&b.newton_history, 1e-9),
            nondegenerate: b.nondegenerate,
        })
        .collect();
    let failing = entries.iter().filter(|e| !e.nondegenerate).map(|e| e.index).collect();
    NondegeneracyReport { entries, failing }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_are_unit() {
        for n in [2, 3] {
            for u in direction_grid(n, 37) {
                assert!((linalg::norm(&u) - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sphere_exp_moves_by_angle() {
        let u = [0.0, 0.0, 1.0];
        let b = sphere_tangent_basis(&u, 3);
        let v = sphere_exp(&u, &b, &[0.3, 0.0]);
        assert!((linalg::dot(&v, &u) - 0.3f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn quadratic_detection() {
        assert!(converged_quadratically(&[1e-2, 1e-5, 1e-11, 8e-12], 1e-9));
        assert!(!converged_quadratically(&[1e-6, 2.5e-7, 6e-8, 1.5e-8, 3.8e-9, 9.5e-10], 1e-9));
    }

    #[test]
    fn flat_single_branch() {
        let m = ManifoldModel::flat(2);
        let set = find_branches(&m, &[1.0, 0.5], &[0.6, 0.8], &SearchOptions::default()).unwrap();
        assert_eq!(set.branches.len(), 1);
        let b = &set.branches[0];
        assert!((b.limit.s + (0.6 + 0.4)).abs() < 1e-8);
        assert!((b.jacobian - 1.0).abs() < 1e-9, "J = {}", b.jacobian);
        assert_eq!(b.conj_count, 0);
        assert!(b.nondegenerate);
    }
}
