//! Adaptive Dormand–Prince 5(4) integration with continuous output and
//! terminal event location.
//!
//! The solution keeps every accepted step together with its dense-output
//! coefficients, so callers can evaluate the trajectory between steps and
//! locate crossings of arbitrary functions of the state.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Step-size control and budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step allowed; `f64::INFINITY` for none.
    pub max_step: f64,
    pub max_steps: usize,
    /// Absolute tolerance on the located event parameter.
    pub event_tol: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 200_000,
            event_tol: 1e-13,
        }
    }
}

/// Direction of a zero crossing that terminates integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    /// Event function passes from positive to non-positive.
    Falling,
    /// Event function passes from negative to non-negative.
    Rising,
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    coeffs: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.h >= 0.0 {
            (self.t0, self.t1())
        } else {
            (self.t1(), self.t0)
        };
        t >= lo && t <= hi
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        for i in 0..out.len() {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
    }

    pub fn start(&self) -> &[f64] {
        &self.coeffs[0]
    }
}

/// Trajectory produced by [`integrate`].
#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub steps: Vec<DenseStep>,
    pub t_end: f64,
    pub y_end: Vec<f64>,
    /// True when integration stopped at a located event.
    pub event_hit: bool,
    pub rhs_evals: usize,
}

impl OdeSolution {
    pub fn t_start(&self) -> f64 {
        self.steps.first().map(|s| s.t0).unwrap_or(self.t_end)
    }

    /// Continuous output at `t`, clamped to the integrated interval.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.y_end.len()];
        if self.steps.is_empty() || t == self.t_end {
            out.copy_from_slice(&self.y_end);
            return out;
        }
        let idx = self
            .steps
            .partition_point(|s| if s.h >= 0.0 { s.t1() < t } else { s.t1() > t })
            .min(self.steps.len() - 1);
        self.steps[idx].eval(t, &mut out);
        out
    }
}

fn stage(y: &[f64], h: f64, terms: &[(f64, &[f64])], out: &mut [f64]) {
    for i in 0..y.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

struct Workspace {
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
        }
    }
}

/// Takes one Dormand–Prince step assuming `w.k[0] = f(t, y)`; fills `w.ynew`
/// and the remaining stages and returns the scaled error norm.
fn dp_step<F>(f: &F, t: f64, y: &[f64], h: f64, w: &mut Workspace, opts: &OdeOptions) -> f64
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let Workspace { k, ytmp, ynew } = w;
    let [k1, k2, k3, k4, k5, k6, k7] = k;
    stage(y, h, &[(A21, k1)], ytmp);
    f(t + C2 * h, ytmp, k2);
    stage(y, h, &[(A31, k1), (A32, k2)], ytmp);
    f(t + C3 * h, ytmp, k3);
    stage(y, h, &[(A41, k1), (A42, k2), (A43, k3)], ytmp);
    f(t + C4 * h, ytmp, k4);
    stage(y, h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)], ytmp);
    f(t + C5 * h, ytmp, k5);
    stage(y, h, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)], ytmp);
    f(t + h, ytmp, k6);
    stage(y, h, &[(A71, k1), (A73, k3), (A74, k4), (A75, k5), (A76, k6)], ynew);
    f(t + h, ynew, k7);
    let mut err = 0.0;
    for i in 0..y.len() {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
        err += (e / sc).powi(2);
    }
    (err / y.len() as f64).sqrt()
}

fn dense_coeffs(y: &[f64], h: f64, w: &Workspace) -> [Vec<f64>; 5] {
    let n = y.len();
    let [k1, _k2, k3, k4, k5, k6, k7] = &w.k;
    let mut r = std::array::from_fn(|_| vec![0.0; n]);
    for i in 0..n {
        let dy = w.ynew[i] - y[i];
        let bspl = h * k1[i] - dy;
        r[0][i] = y[i];
        r[1][i] = dy;
        r[2][i] = bspl;
        r[3][i] = dy - h * k7[i] - bspl;
        r[4][i] = h
            * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    r
}

fn initial_step<F>(f: &F, t0: f64, y0: &[f64], f0: &[f64], dir: f64, opts: &OdeOptions) -> f64
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let sc: Vec<f64> = y0.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let d0 = (y0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = (f0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(opts.max_step);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, d)| y + dir * h0 * d).collect();
    let mut f1 = vec![0.0; n];
    f(t0 + dir * h0, &y1, &mut f1);
    let d2 = (f1
        .iter()
        .zip(f0)
        .zip(&sc)
        .map(|((a, b), s)| ((a - b) / s).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(opts.max_step)
}

/// Integrates `y' = f(t, y)` from `t0` toward `t_max`.
///
/// When `event` is given, integration stops at the first crossing of the
/// event function in the requested direction; the crossing parameter is
/// located on the dense output and the terminal state is recomputed with a
/// fresh Runge–Kutta step ending exactly there.
pub fn integrate<F, G>(
    f: F,
    t0: f64,
    y0: &[f64],
    t_max: f64,
    opts: &OdeOptions,
    event: Option<(G, Crossing)>,
) -> Result<OdeSolution>
where
    F: Fn(f64, &[f64], &mut [f64]),
    G: Fn(f64, &[f64]) -> f64,
{
    let n = y0.len();
    let dir = if t_max >= t0 { 1.0 } else { -1.0 };
    let mut w = Workspace::new(n);
    let mut y = y0.to_vec();
    let mut t = t0;
    f(t, &y, &mut w.k[0]);
    let mut evals = 1usize;
    let mut h = initial_step(&f, t0, y0, &w.k[0].clone(), dir, opts);
    evals += 1;
    let mut steps = Vec::new();
    let mut g_prev = event.as_ref().map(|(g, _)| g(t, &y));
    let mut rejected_last = false;

    while (t_max - t) * dir > 0.0 {
        if steps.len() >= opts.max_steps {
            return Err(Error::IntegratorFailure(format!(
                "step budget {} exhausted at t = {t}",
                opts.max_steps
            )));
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::IntegratorFailure(format!("step size underflow at t = {t}")));
        }
        let h_try = h.min((t_max - t).abs()).min(opts.max_step);
        let err = dp_step(&f, t, &y, dir * h_try, &mut w, opts);
        evals += 6;
        if !err.is_finite() || w.ynew.iter().any(|v| !v.is_finite()) {
            h = h_try * 0.2;
            rejected_last = true;
            continue;
        }
        if err > 1.0 {
            h = h_try * (0.9 * err.powf(-0.2)).max(0.2);
            rejected_last = true;
            continue;
        }
        let step = DenseStep {
            t0: t,
            h: dir * h_try,
            coeffs: dense_coeffs(&y, dir * h_try, &w),
        };
        let t_new = t + dir * h_try;

        if let Some((g, crossing)) = &event {
            let g0 = g_prev.expect("event value");
            let g1 = g(t_new, &w.ynew);
            let crossed = match crossing {
                Crossing::Falling => g0 > 0.0 && g1 <= 0.0,
                Crossing::Rising => g0 < 0.0 && g1 >= 0.0,
            };
            if crossed {
                let t_ev = locate_root(&step, g, t, t_new, g0, g1, n, opts.event_tol);
                // Fresh step from the start of the interval to the event.
                let h_ev = t_ev - t;
                let mut w2 = Workspace::new(n);
                f(t, &y, &mut w2.k[0]);
                dp_step(&f, t, &y, h_ev, &mut w2, opts);
                evals += 7;
                let final_step = DenseStep {
                    t0: t,
                    h: h_ev,
                    coeffs: dense_coeffs(&y, h_ev, &w2),
                };
                steps.push(final_step);
                return Ok(OdeSolution {
                    steps,
                    t_end: t_ev,
                    y_end: w2.ynew,
                    event_hit: true,
                    rhs_evals: evals,
                });
            }
            g_prev = Some(g1);
        }

        steps.push(step);
        t = t_new;
        std::mem::swap(&mut y, &mut w.ynew);
        // FSAL
        let k7 = std::mem::take(&mut w.k[6]);
        w.k[6] = std::mem::replace(&mut w.k[0], k7);
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).min(5.0) };
        let fac = if rejected_last { fac.min(1.0) } else { fac };
        h = h_try * fac.max(0.2);
        rejected_last = false;
    }

    Ok(OdeSolution {
        steps,
        t_end: t,
        y_end: y,
        event_hit: false,
        rhs_evals: evals,
    })
}

/// Illinois-modified regula falsi on the dense output of one step.
#[allow(clippy::too_many_arguments)]
fn locate_root<G>(step: &DenseStep, g: &G, mut a: f64, mut b: f64, mut ga: f64, mut gb: f64, n: usize, tol: f64) -> f64
where
    G: Fn(f64, &[f64]) -> f64,
{
    let mut buf = vec![0.0; n];
    let mut side = 0i32;
    for _ in 0..200 {
        if (b - a).abs() <= tol.max(4.0 * f64::EPSILON * b.abs()) {
            break;
        }
        let c = if ga != gb { (a * gb - b * ga) / (gb - ga) } else { 0.5 * (a + b) };
        let c = if c.is_finite() && (c - a) * (c - b) < 0.0 { c } else { 0.5 * (a + b) };
        step.eval(c, &mut buf);
        let gc = g(c, &buf);
        if gc == 0.0 {
            return c;
        }
        if (gc > 0.0) == (ga > 0.0) {
            a = c;
            ga = gc;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            gb = gc;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
    }
    // The returned point lies on the non-positive/non-negative side of the crossing.
    b
}
