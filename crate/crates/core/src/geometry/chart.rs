use super::{GeometryKind, ManifoldModel};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vec3, ZERO_MAT};
use serde::{Deserialize, Serialize};

/// Which chart a point is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chart {
    Interior,
    Collar,
}

/// A base point: interior coordinates `z`, or collar coordinates `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub chart: Chart,
    pub coords: Vec<f64>,
}

/// A base point with a covector in the same chart.
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentPoint {
    pub point: ChartPoint,
    pub covector: Vec<f64>,
}

/// Local coordinates on the boundary.
///
/// For scattering models the boundary is the unit sphere, described around a
/// chosen centre `ω₀` through an orthonormal frame whose first column is
/// `ω₀`: in dimension 2 the chart is the angle from `ω₀`, in dimension 3 it
/// is stereographic projection from `-ω₀`. Both are conformal with
/// round metric `c(y) |dy|²`. AH models use the flat boundary `ℝ^{n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryChart {
    Angle { frame: Mat },
    Stereographic { frame: Mat },
    Flat { dim: usize },
}

impl BoundaryChart {
    /// Chart on the sphere `S^{n-1}` centred at unit vector `center`.
    pub fn centered_at(center: &[f64], n: usize) -> Self {
        let l = linalg::norm(&center[..n]);
        let mut c = [0.0; 3];
        for i in 0..n {
            c[i] = center[i] / l;
        }
        let comp = linalg::orthonormal_complement(&c, n);
        let mut frame = ZERO_MAT;
        for i in 0..n {
            frame[i][0] = c[i];
            for (a, e) in comp.iter().enumerate() {
                frame[i][a + 1] = e[i];
            }
        }
        if n == 2 {
            BoundaryChart::Angle { frame }
        } else {
            BoundaryChart::Stereographic { frame }
        }
    }

    /// Default chart of a model: centred at `e₁` (scattering) or flat (AH).
    pub fn default_for(model: &ManifoldModel) -> Self {
        match model.kind {
            GeometryKind::Scattering => {
                let mut e1 = [0.0; 3];
                e1[0] = 1.0;
                Self::centered_at(&e1, model.dim)
            }
            GeometryKind::AsympHyperbolic => BoundaryChart::Flat { dim: model.dim },
        }
    }

    pub fn boundary_dim(&self) -> usize {
        match self {
            BoundaryChart::Angle { .. } => 1,
            BoundaryChart::Stereographic { .. } => 2,
            BoundaryChart::Flat { dim } => dim - 1,
        }
    }

    fn ambient_dim(&self) -> usize {
        self.boundary_dim() + 1
    }

    /// Embedding `ω(y)` of the chart into `ℝⁿ` and its Jacobian columns.
    ///
    /// Only meaningful for sphere charts; flat charts return `y` padded.
    pub fn embed(&self, y: &[f64]) -> (Vec3, [Vec3; 2]) {
        let mut d = [[0.0; 3]; 2];
        match self {
            BoundaryChart::Angle { frame } => {
                let (s, c) = y[0].sin_cos();
                let loc = [c, s];
                let dloc = [-s, c];
                let mut w = [0.0; 3];
                for i in 0..2 {
                    w[i] = frame[i][0] * loc[0] + frame[i][1] * loc[1];
                    d[0][i] = frame[i][0] * dloc[0] + frame[i][1] * dloc[1];
                }
                (w, d)
            }
            BoundaryChart::Stereographic { frame } => {
                let r2 = y[0] * y[0] + y[1] * y[1];
                let den = 1.0 + r2;
                let loc = [(1.0 - r2) / den, 2.0 * y[0] / den, 2.0 * y[1] / den];
                // derivatives of loc w.r.t. y_j
                let mut dloc = [[0.0; 3]; 2];
                for j in 0..2 {
                    dloc[j][0] = -4.0 * y[j] / (den * den);
                    for a in 0..2 {
                        let delta = if a == j { 1.0 } else { 0.0 };
                        dloc[j][a + 1] = 2.0 * delta / den - 4.0 * y[a] * y[j] / (den * den);
                    }
                }
                let mut w = [0.0; 3];
                for i in 0..3 {
                    w[i] = (0..3).map(|k| frame[i][k] * loc[k]).sum();
                    for j in 0..2 {
                        d[j][i] = (0..3).map(|k| frame[i][k] * dloc[j][k]).sum();
                    }
                }
                (w, d)
            }
            BoundaryChart::Flat { dim } => {
                let mut w = [0.0; 3];
                for j in 0..dim - 1 {
                    w[j] = y[j];
                    d[j][j] = 1.0;
                }
                (w, d)
            }
        }
    }

    /// Inverse of [`embed`](Self::embed) for a unit vector `ω`.
    pub fn coords_of(&self, w: &[f64]) -> Result<Vec<f64>> {
        match self {
            BoundaryChart::Angle { frame } => {
                let l0 = frame[0][0] * w[0] + frame[1][0] * w[1];
                let l1 = frame[0][1] * w[0] + frame[1][1] * w[1];
                Ok(vec![l1.atan2(l0)])
            }
            BoundaryChart::Stereographic { frame } => {
                let loc: Vec<f64> = (0..3).map(|k| (0..3).map(|i| frame[i][k] * w[i]).sum()).collect();
                let den = 1.0 + loc[0];
                if den < 1e-6 {
                    return Err(Error::OutsideChart(
                        "boundary point at the antipode of the stereographic centre".into(),
                    ));
                }
                Ok(vec![loc[1] / den, loc[2] / den])
            }
            BoundaryChart::Flat { dim } => Ok(w[..dim - 1].to_vec()),
        }
    }

    /// Conformal factor `c(y)` of the round (or flat) boundary metric and its gradient.
    pub fn conformal_factor(&self, y: &[f64]) -> (f64, [f64; 2]) {
        match self {
            BoundaryChart::Angle { .. } | BoundaryChart::Flat { .. } => (1.0, [0.0; 2]),
            BoundaryChart::Stereographic { .. } => {
                let den = 1.0 + y[0] * y[0] + y[1] * y[1];
                let c = 4.0 / (den * den);
                let g = -16.0 / (den * den * den);
                (c, [g * y[0], g * y[1]])
            }
        }
    }

    pub(crate) fn check_model(&self, model: &ManifoldModel) -> Result<()> {
        let ok = match (self, model.kind) {
            (BoundaryChart::Flat { dim }, GeometryKind::AsympHyperbolic) => *dim == model.dim,
            (BoundaryChart::Flat { .. }, _) | (_, GeometryKind::AsympHyperbolic) => false,
            (c, GeometryKind::Scattering) => c.ambient_dim() == model.dim,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("boundary chart does not match model".into()))
        }
    }
}

/// Jacobian columns `∂z/∂(x, y_j)` of the collar-to-interior map of a scattering model.
pub(crate) fn scattering_collar_jacobian(chart: &BoundaryChart, x: f64, y: &[f64], n: usize) -> (Vec3, Mat) {
    let (w, dw) = chart.embed(y);
    let mut z = [0.0; 3];
    let mut jac = ZERO_MAT;
    for i in 0..n {
        z[i] = w[i] / x;
        jac[i][0] = -w[i] / (x * x);
        for j in 0..n - 1 {
            jac[i][j + 1] = dw[j][i] / x;
        }
    }
    (z, jac)
}

/// Transports a base point and covector between the interior and collar charts.
///
/// The covector is pulled back by the chart Jacobian, so its metric length is
/// preserved. `boundary` fixes the boundary chart used on the collar side.
pub fn chart_transition(
    model: &ManifoldModel,
    p: &CotangentPoint,
    boundary: &BoundaryChart,
) -> Result<CotangentPoint> {
    boundary.check_model(model)?;
    let n = model.dim;
    if p.point.coords.len() != n || p.covector.len() != n {
        return Err(Error::InvalidArgument("coordinate length does not match model dimension".into()));
    }
    let limit = model.collar_limit();
    match model.kind {
        GeometryKind::AsympHyperbolic => {
            let x = p.point.coords[0];
            if !(x > 0.0 && x <= limit) {
                return Err(Error::OutsideOverlap(format!("x = {x} not in (0, {limit}]")));
            }
            let chart = match p.point.chart {
                Chart::Interior => Chart::Collar,
                Chart::Collar => Chart::Interior,
            };
            Ok(CotangentPoint {
                point: ChartPoint {
                    chart,
                    coords: p.point.coords.clone(),
                },
                covector: p.covector.clone(),
            })
        }
        GeometryKind::Scattering => match p.point.chart {
            Chart::Interior => {
                let z = &p.point.coords;
                let r = linalg::norm(z);
                let x = 1.0 / r;
                if !(x > 0.0 && x <= limit) {
                    return Err(Error::OutsideOverlap(format!("x = {x} not in (0, {limit}]")));
                }
                let w: Vec<f64> = z.iter().map(|v| v / r).collect();
                let y = boundary.coords_of(&w).map_err(|e| Error::OutsideOverlap(e.to_string()))?;
                let (_, jac) = scattering_collar_jacobian(boundary, x, &y, n);
                let cov = linalg::mat_t_vec(&jac, &p.covector, n);
                let mut coords = vec![x];
                coords.extend_from_slice(&y);
                Ok(CotangentPoint {
                    point: ChartPoint {
                        chart: Chart::Collar,
                        coords,
                    },
                    covector: cov[..n].to_vec(),
                })
            }
            Chart::Collar => {
                let x = p.point.coords[0];
                if !(x > 0.0 && x <= limit) {
                    return Err(Error::OutsideOverlap(format!("x = {x} not in (0, {limit}]")));
                }
                let y = &p.point.coords[1..];
                let (z, jac) = scattering_collar_jacobian(boundary, x, y, n);
                let jt = linalg::transpose(&jac);
                let inv = linalg::inverse(&jt, n)
                    .ok_or_else(|| Error::OutsideOverlap("singular chart jacobian".into()))?;
                let cov = linalg::mat_vec(&inv, &p.covector, n);
                Ok(CotangentPoint {
                    point: ChartPoint {
                        chart: Chart::Interior,
                        coords: z[..n].to_vec(),
                    },
                    covector: cov[..n].to_vec(),
                })
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_chart_round_trip() {
        let c = BoundaryChart::centered_at(&[0.6, 0.8], 2);
        for &t in &[-2.0, -0.3, 0.0, 1.1, 3.0] {
            let (w, _) = c.embed(&[t]);
            let back = c.coords_of(&w).unwrap();
            assert!((back[0] - t).abs() < 1e-14);
        }
        let (w0, _) = c.embed(&[0.0]);
        assert!((w0[0] - 0.6).abs() < 1e-15 && (w0[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn stereographic_chart_is_conformal() {
        let c = BoundaryChart::centered_at(&[0.0, 0.0, 1.0], 3);
        let y = [0.3, -0.7];
        let (w, d) = c.embed(&y);
        assert!((linalg::norm(&w) - 1.0).abs() < 1e-14);
        let (cf, _) = c.conformal_factor(&y);
        assert!((linalg::dot(&d[0], &d[0]) - cf).abs() < 1e-14);
        assert!((linalg::dot(&d[1], &d[1]) - cf).abs() < 1e-14);
        assert!(linalg::dot(&d[0], &d[1]).abs() < 1e-14);
        let back = c.coords_of(&w).unwrap();
        assert!((back[0] - y[0]).abs() < 1e-14 && (back[1] - y[1]).abs() < 1e-14);
    }
}
