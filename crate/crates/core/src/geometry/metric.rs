use super::chart::BoundaryChart;
use super::{GeometryKind, ManifoldModel, ModelId};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, ZERO_MAT};

/// A metric tensor at a point with its inverse and first coordinate derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricData {
    pub dim: usize,
    pub components: Mat,
    pub inverse: Mat,
    /// `d_components[k][i][j] = ∂_k g_ij`.
    pub d_components: [Mat; 3],
}

impl MetricData {
    fn from_parts(dim: usize, components: Mat, d_components: [Mat; 3]) -> Result<Self> {
        let inverse = linalg::inverse(&components, dim)
            .ok_or_else(|| Error::OutsideChart("metric is singular".into()))?;
        Ok(Self {
            dim,
            components,
            inverse,
            d_components,
        })
    }

    /// `∂_k g^{ij} = -g^{ia} ∂_k g_ab g^{bj}`.
    pub fn d_inverse(&self, k: usize) -> Mat {
        let n = self.dim;
        let t = linalg::mat_mul(&self.inverse, &self.d_components[k], n);
        let mut out = linalg::mat_mul(&t, &self.inverse, n);
        for row in out.iter_mut().take(n) {
            for v in row.iter_mut().take(n) {
                *v = -*v;
            }
        }
        out
    }

    /// `|ζ|²` of a covector.
    pub fn covector_norm2(&self, zeta: &[f64]) -> f64 {
        linalg::quad_form(&self.inverse, zeta, self.dim)
    }

    pub fn is_positive_definite(&self) -> bool {
        linalg::cholesky(&self.components, self.dim).is_some()
    }
}

/// Interior metric together with its Christoffel symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorMetric {
    pub metric: MetricData,
    /// `christoffel[i][j][k] = Γ^i_{jk}`.
    pub christoffel: [Mat; 3],
}

/// The conformal factor `μ` of `h = μ |dy|²` in a collar chart, with derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollarScalar {
    pub mu: f64,
    pub mu_x: f64,
    pub mu_y: [f64; 2],
}

impl CollarScalar {
    /// Evaluates `μ(x, y)` in the given boundary chart.
    pub fn eval(model: &ManifoldModel, chart: &BoundaryChart, x: f64, y: &[f64]) -> Self {
        let a = model.amplitude();
        let (q, dq) = model.radial_profile(x);
        let m = model.dim - 1;
        match model.kind {
            GeometryKind::Scattering => {
                let (c, dc) = chart.conformal_factor(y);
                if a == 0.0 {
                    return Self { mu: c, mu_x: 0.0, mu_y: dc };
                }
                let (w, dw) = chart.embed(y);
                let (f, grad) = model.angular_profile(&w);
                let base = 1.0 + a * q * f;
                let mut mu_y = [0.0; 2];
                for j in 0..m {
                    let fy = linalg::dot(&grad[..model.dim], &dw[j][..model.dim]);
                    mu_y[j] = a * q * fy * c + base * dc[j];
                }
                Self {
                    mu: base * c,
                    mu_x: a * dq * f * c,
                    mu_y,
                }
            }
            GeometryKind::AsympHyperbolic => {
                if a == 0.0 {
                    return Self { mu: 1.0, mu_x: 0.0, mu_y: [0.0; 2] };
                }
                let (f, grad) = model.angular_profile(&y[..m]);
                let mut mu_y = [0.0; 2];
                for j in 0..m {
                    mu_y[j] = a * q * grad[j];
                }
                Self {
                    mu: 1.0 + a * q * f,
                    mu_x: a * dq * f,
                    mu_y,
                }
            }
        }
    }
}

/// Boundary metric family `h(x, y)` in the model's default boundary chart.
pub fn collar_metric(model: &ManifoldModel, x: f64, y: &[f64]) -> Result<MetricData> {
    collar_metric_in(model, &BoundaryChart::default_for(model), x, y)
}

/// Boundary metric family `h(x, y)` in an explicit boundary chart.
///
/// `d_components[0]` holds `∂h/∂x`, `d_components[1 + j]` holds `∂h/∂y_j`.
pub fn collar_metric_in(model: &ManifoldModel, chart: &BoundaryChart, x: f64, y: &[f64]) -> Result<MetricData> {
    chart.check_model(model)?;
    let m = model.dim - 1;
    let limit = model.collar_limit();
    if !(0.0..=limit).contains(&x) {
        return Err(Error::OutsideChart(format!("collar x = {x} not in [0, {limit}]")));
    }
    if y.len() != m || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::OutsideChart("boundary coordinates malformed".into()));
    }
    let cs = CollarScalar::eval(model, chart, x, y);
    let mut comp = ZERO_MAT;
    let mut d = [ZERO_MAT; 3];
    for i in 0..m {
        comp[i][i] = cs.mu;
        d[0][i][i] = cs.mu_x;
        for j in 0..m {
            d[1 + j][i][i] = cs.mu_y[j];
        }
    }
    MetricData::from_parts(m, comp, d)
}

/// Interior metric and Christoffel symbols at interior chart point `z`.
pub fn interior_metric(model: &ManifoldModel, z: &[f64]) -> Result<InteriorMetric> {
    let metric = interior_metric_data(model, z)?;
    let christoffel = christoffel(&metric);
    Ok(InteriorMetric { metric, christoffel })
}

pub(crate) fn christoffel(md: &MetricData) -> [Mat; 3] {
    let n = md.dim;
    let mut gamma = [ZERO_MAT; 3];
    // lowered: Γ_ljk = ½(∂_j g_lk + ∂_k g_lj - ∂_l g_jk)
    let mut low = [ZERO_MAT; 3];
    for l in 0..n {
        for j in 0..n {
            for k in 0..n {
                low[l][j][k] = 0.5
                    * (md.d_components[j][l][k] + md.d_components[k][l][j] - md.d_components[l][j][k]);
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                gamma[i][j][k] = (0..n).map(|l| md.inverse[i][l] * low[l][j][k]).sum();
            }
        }
    }
    gamma
}

pub(crate) fn interior_metric_data(model: &ManifoldModel, z: &[f64]) -> Result<MetricData> {
    let n = model.dim;
    if z.len() < n || z[..n].iter().any(|v| !v.is_finite()) {
        return Err(Error::OutsideChart("interior coordinates malformed".into()));
    }
    match model.model_id {
        ModelId::FlatEuclidean => MetricData::from_parts(n, linalg::identity(n), [ZERO_MAT; 3]),
        ModelId::HyperbolicHn => {
            let x = z[0];
            if x <= 0.0 {
                return Err(Error::OutsideChart(format!("half-space point with x = {x}")));
            }
            let mut g = ZERO_MAT;
            let mut d = [ZERO_MAT; 3];
            for i in 0..n {
                g[i][i] = 1.0 / (x * x);
                d[0][i][i] = -2.0 / (x * x * x);
            }
            MetricData::from_parts(n, g, d)
        }
        ModelId::PerturbedAH => {
            let x = z[0];
            if x <= 0.0 {
                return Err(Error::OutsideChart(format!("half-space point with x = {x}")));
            }
            let cs = CollarScalar::eval(model, &BoundaryChart::Flat { dim: n }, x, &z[1..n]);
            let x2 = x * x;
            let x3 = x2 * x;
            let mut g = ZERO_MAT;
            let mut d = [ZERO_MAT; 3];
            g[0][0] = 1.0 / x2;
            d[0][0][0] = -2.0 / x3;
            for j in 1..n {
                g[j][j] = cs.mu / x2;
                d[0][j][j] = cs.mu_x / x2 - 2.0 * cs.mu / x3;
                for k in 1..n {
                    d[k][j][j] = cs.mu_y[k - 1] / x2;
                }
            }
            MetricData::from_parts(n, g, d)
        }
        ModelId::PerturbedScattering => {
            let r = linalg::norm(&z[..n]);
            let a = model.amplitude();
            if r <= 1.0 || a == 0.0 {
                return MetricData::from_parts(n, linalg::identity(n), [ZERO_MAT; 3]);
            }
            let x = 1.0 / r;
            let mut u = [0.0; 3];
            for i in 0..n {
                u[i] = z[i] / r;
            }
            let (q, dq) = model.radial_profile(x);
            let (f, grad) = model.angular_profile(&u);
            let phi = a * q * f;
            let mut dphi = [0.0; 3];
            for k in 0..n {
                let mut fk = 0.0;
                for i in 0..n {
                    let delta = if i == k { 1.0 } else { 0.0 };
                    fk += grad[i] * (delta - u[i] * u[k]) / r;
                }
                dphi[k] = a * (dq * (-x * x * u[k]) * f + q * fk);
            }
            let mut g = ZERO_MAT;
            let mut d = [ZERO_MAT; 3];
            for i in 0..n {
                for j in 0..n {
                    let dij = if i == j { 1.0 } else { 0.0 };
                    let p = dij - u[i] * u[j];
                    g[i][j] = dij + phi * p;
                    for k in 0..n {
                        let dik = if i == k { 1.0 } else { 0.0 };
                        let djk = if j == k { 1.0 } else { 0.0 };
                        let dp = -(dik * u[j] + djk * u[i] - 2.0 * u[i] * u[j] * u[k]) / r;
                        d[k][i][j] = dphi[k] * p + phi * dp;
                    }
                }
            }
            MetricData::from_parts(n, g, d)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_collar_is_round_metric() {
        let m = ManifoldModel::flat(2);
        let h = collar_metric(&m, 0.1, &[0.7]).unwrap();
        assert_eq!(h.components[0][0], 1.0);
        assert_eq!(h.d_components[0][0][0], 0.0);
    }

    #[test]
    fn hyperbolic_collar_is_flat() {
        let m = ManifoldModel::hyperbolic(3);
        let h = collar_metric(&m, 0.7, &[0.3, -1.0]).unwrap();
        assert_eq!(h.components[0][0], 1.0);
        assert_eq!(h.components[1][1], 1.0);
        assert_eq!(h.components[0][1], 0.0);
        assert_eq!(h.d_components[0][0][0], 0.0);
    }

    #[test]
    fn perturbed_collar_catalog_value() {
        let m = ManifoldModel::perturbed_scattering(2, 0.1, 1.0).unwrap();
        let h = collar_metric(&m, 0.5, &[0.0]).unwrap();
        assert!((h.components[0][0] - 1.05).abs() < 1e-15);
        assert!((h.d_components[0][0][0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn collar_domain_checked() {
        let m = ManifoldModel::flat(2);
        assert!(matches!(collar_metric(&m, -0.1, &[0.0]), Err(Error::OutsideChart(_))));
        assert!(matches!(collar_metric(&m, 0.9, &[0.0]), Err(Error::OutsideChart(_))));
        let h = ManifoldModel::hyperbolic(3);
        assert!(matches!(interior_metric(&h, &[0.0, 1.0, 1.0]), Err(Error::OutsideChart(_))));
    }

    #[test]
    fn hyperbolic_christoffels_closed_form() {
        let m = ManifoldModel::hyperbolic(3);
        let im = interior_metric(&m, &[1.0, 0.0, 0.0]).unwrap();
        let g = &im.christoffel;
        assert!((g[0][0][0] + 1.0).abs() < 1e-15);
        assert!((g[0][1][1] - 1.0).abs() < 1e-15);
        assert!((g[0][2][2] - 1.0).abs() < 1e-15);
        assert!((g[1][0][1] + 1.0).abs() < 1e-15);
        assert!((g[2][2][0] + 1.0).abs() < 1e-15);
        assert_eq!(g[1][1][1], 0.0);
    }

    #[test]
    fn flat_interior_identity() {
        let im = interior_metric(&ManifoldModel::flat(3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(im.metric.components, linalg::identity(3));
        assert!(im.christoffel.iter().flatten().flatten().all(|v| *v == 0.0));
    }
}
