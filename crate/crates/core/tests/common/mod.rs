//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;
use sojourn::flow::CoFrame;
use sojourn::geometry::{interior_metric, ManifoldModel};
use std::f64::consts::PI;

/// `-θ·z` for straight lines.
pub fn flat_sojourn(z: &[f64], theta: &[f64]) -> f64 {
    -z.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>()
}

/// Busemann-type sojourn time on the half space: `log((x² + |y - y'|²)/x)`.
pub fn h3_sojourn(z: &[f64], y: &[f64]) -> f64 {
    let x = z[0];
    let d2: f64 = z[1..].iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    ((x * x + d2) / x).ln()
}

/// Exact Euclidean Poisson kernel `(iλ/2π)^{(n-1)/2} e^{iλθ·z}`.
pub fn flat_kernel(z: &[f64], theta: &[f64], lam: f64) -> Complex64 {
    let n = z.len() as f64;
    let dot: f64 = z.iter().zip(theta).map(|(a, b)| a * b).sum();
    (Complex64::i() * lam / (2.0 * PI)).powf((n - 1.0) / 2.0) * Complex64::from_polar(1.0, lam * dot)
}

pub fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

/// Least-squares slope.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Phase of consecutive samples, unwrapped by the smallest increments.
pub fn unwrapped_phase(v: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    let mut acc = v[0].arg();
    out.push(acc);
    for w in v.windows(2) {
        acc += (w[1] / w[0]).arg();
        out.push(acc);
    }
    out
}

/// Radiation field of the flat ℓ = 0 shell `r u = G(t - r) - G(t + r)`,
/// `G = (1 - u²)^p` on `[-r0, -r0 + width]`: the limit of `∂ₜ(r u)` along
/// `t - r = s`, which is `G'(s)`.
pub fn dalembert_radiation(r0: f64, width: f64, p: i32, s: f64) -> f64 {
    let h = 0.5 * width;
    let u = (s - (-r0 + h)) / h;
    if u.abs() >= 1.0 {
        return 0.0;
    }
    p as f64 * (1.0 - u * u).powi(p - 1) * (-2.0 * u) / h
}

type State = Vec<f64>;

fn geodesic_rhs(model: &ManifoldModel, y: &State) -> State {
    let n = model.dim;
    let (z, v) = y.split_at(n);
    let g = interior_metric(model, z).expect("interior point");
    let mut out = v.to_vec();
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            for k in 0..n {
                acc += g.christoffel[i][j][k] * v[j] * v[k];
            }
        }
        out.push(-acc);
    }
    out
}

fn rk4_step(model: &ManifoldModel, y: &State, h: f64) -> State {
    let add = |a: &State, b: &State, c: f64| a.iter().zip(b).map(|(p, q)| p + c * q).collect::<State>();
    let k1 = geodesic_rhs(model, y);
    let k2 = geodesic_rhs(model, &add(y, &k1, h / 2.0));
    let k3 = geodesic_rhs(model, &add(y, &k2, h / 2.0));
    let k4 = geodesic_rhs(model, &add(y, &k3, h));
    (0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Conjugate points along the geodesic leaving `z` in coframe direction
/// `(cos α, sin α)` of a two-dimensional scattering model, counted as sign
/// changes of `det[γ', ∂_α γ]` with `∂_α γ` from the neighbours `α ± h`.
///
/// The three geodesics are integrated with fixed-step RK4 until `|z| > r_far`;
/// afterwards they are treated as straight lines and the remaining zero of
/// the linear determinant, if any, is added.
pub fn fd_family_conjugates(model: &ManifoldModel, z: &[f64], alpha: f64, h: f64, dt: f64, r_far: f64) -> usize {
    assert_eq!(model.dim, 2);
    let frame = CoFrame::at(model, z).expect("frame");
    let start = |a: f64| {
        let mut y = z.to_vec();
        y.extend(frame.velocity(&[a.cos(), a.sin()]));
        y
    };
    let mut c = start(alpha);
    let mut p = start(alpha + h);
    let mut m = start(alpha - h);
    let det = |c: &State, p: &State, m: &State| {
        let j = [(p[0] - m[0]) / (2.0 * h), (p[1] - m[1]) / (2.0 * h)];
        c[2] * j[1] - c[3] * j[0]
    };
    let mut t = 0.0;
    let mut count = 0;
    let mut prev: Option<f64> = None;
    while (c[0] * c[0] + c[1] * c[1]).sqrt() < r_far {
        c = rk4_step(model, &c, dt);
        p = rk4_step(model, &p, dt);
        m = rk4_step(model, &m, dt);
        t += dt;
        if t < 0.05 {
            continue;
        }
        let d = det(&c, &p, &m);
        if let Some(q) = prev {
            if q * d < 0.0 {
                count += 1;
            }
        }
        prev = Some(d);
    }
    // straight continuation: det[v, J + τW] = d0 + τ d1
    let d0 = det(&c, &p, &m);
    let w = [(p[2] - m[2]) / (2.0 * h), (p[3] - m[3]) / (2.0 * h)];
    let d1 = c[2] * w[1] - c[3] * w[0];
    if d1 != 0.0 && -d0 / d1 > 0.0 {
        count += 1;
    }
    count
}
