use super::metric::{christoffel, interior_metric_data};
use super::{ManifoldModel, ModelId};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vec3};

/// Finite-difference step for the Christoffel derivatives of perturbed models.
pub const CURVATURE_FD_STEP: f64 = 1e-4;

type Tensor4 = [[[[f64; 3]; 3]; 3]; 3];

/// Riemann tensor at a point, `riemann[i][j][k][l] = R^i_{jkl}` with
/// `R(X, Y)Z = R^i_{jkl} Z^j X^k Y^l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Curvature {
    pub dim: usize,
    pub metric: Mat,
    pub riemann: Tensor4,
}

impl Curvature {
    /// `R(X, Y) Z`.
    pub fn apply(&self, x: &[f64], y: &[f64], z: &[f64]) -> Vec3 {
        let n = self.dim;
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        acc += self.riemann[i][j][k][l] * z[j] * x[k] * y[l];
                    }
                }
            }
            *o = acc;
        }
        out
    }

    /// Sectional curvature of the plane spanned by `u` and `v`.
    pub fn sectional(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.dim;
        let r = self.apply(u, v, v);
        let num = linalg::bilinear(&self.metric, &r, u, n);
        let uu = linalg::quad_form(&self.metric, u, n);
        let vv = linalg::quad_form(&self.metric, v, n);
        let uv = linalg::bilinear(&self.metric, u, v, n);
        num / (uu * vv - uv * uv)
    }

    /// Largest violation of the algebraic symmetries of `R_{ijkl}`, relative to its size.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.dim;
        let low = self.lowered();
        let mut scale: f64 = 0.0;
        let mut defect: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let r = low[i][j][k][l];
                        scale = scale.max(r.abs());
                        defect = defect
                            .max((r + low[j][i][k][l]).abs())
                            .max((r + low[i][j][l][k]).abs())
                            .max((r - low[k][l][i][j]).abs())
                            .max((r + low[i][k][l][j] + low[i][l][j][k]).abs());
                    }
                }
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            defect / scale
        }
    }

    fn lowered(&self) -> Tensor4 {
        let n = self.dim;
        let mut low = [[[[0.0; 3]; 3]; 3]; 3];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        low[i][j][k][l] = (0..n).map(|m| self.metric[i][m] * self.riemann[m][j][k][l]).sum();
                    }
                }
            }
        }
        low
    }
}

/// Curvature tensor at an interior chart point.
///
/// Exact for the flat and hyperbolic models; perturbed models differentiate
/// the analytic Christoffel symbols by central differences with Richardson
/// refinement (steps `h` and `h/2`, `h = 1e-4`).
pub fn curvature_operator(model: &ManifoldModel, z: &[f64]) -> Result<Curvature> {
    let md = interior_metric_data(model, z)?;
    let n = model.dim;
    match model.model_id {
        ModelId::FlatEuclidean => Ok(Curvature {
            dim: n,
            metric: md.components,
            riemann: [[[[0.0; 3]; 3]; 3]; 3],
        }),
        ModelId::HyperbolicHn => Ok(constant_curvature(n, &md.components, -1.0)),
        ModelId::PerturbedScattering | ModelId::PerturbedAH => fd_curvature(model, z, CURVATURE_FD_STEP),
    }
}

fn constant_curvature(n: usize, g: &Mat, k: f64) -> Curvature {
    let mut r = [[[[0.0; 3]; 3]; 3]; 3];
    for (i, ri) in r.iter_mut().enumerate().take(n) {
        for (j, rij) in ri.iter_mut().enumerate().take(n) {
            for (kk, rijk) in rij.iter_mut().enumerate().take(n) {
                for (l, v) in rijk.iter_mut().enumerate().take(n) {
                    let dik = if i == kk { 1.0 } else { 0.0 };
                    let dil = if i == l { 1.0 } else { 0.0 };
                    *v = k * (dik * g[j][l] - dil * g[j][kk]);
                }
            }
        }
    }
    Curvature { dim: n, metric: *g, riemann: r }
}

/// Curvature from finite differences of the Christoffel symbols.
pub(crate) fn fd_curvature(model: &ManifoldModel, z: &[f64], h: f64) -> Result<Curvature> {
    let n = model.dim;
    let md = interior_metric_data(model, z)?;
    let gamma = christoffel(&md);
    let gamma_at = |k: usize, step: f64| -> Result<[Mat; 3]> {
        let mut p = [0.0; 3];
        p[..n].copy_from_slice(&z[..n]);
        p[k] += step;
        interior_metric_data(model, &p[..n]).map(|m| christoffel(&m))
    };
    // dgamma[k][i][j][l] = ∂_k Γ^i_{jl}
    let mut dgamma = [[[[0.0; 3]; 3]; 3]; 3];
    for (k, dk) in dgamma.iter_mut().enumerate().take(n) {
        let central = |s: f64| -> Result<[Mat; 3]> {
            let p = gamma_at(k, s)?;
            let m = gamma_at(k, -s)?;
            let mut d = [[[0.0; 3]; 3]; 3];
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        d[i][j][l] = (p[i][j][l] - m[i][j][l]) / (2.0 * s);
                    }
                }
            }
            Ok(d)
        };
        let d1 = central(h)?;
        let d2 = central(0.5 * h)?;
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    dk[i][j][l] = (4.0 * d2[i][j][l] - d1[i][j][l]) / 3.0;
                }
            }
        }
    }
    let mut r = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut v = dgamma[k][i][l][j] - dgamma[l][i][k][j];
                    for m in 0..n {
                        v += gamma[i][k][m] * gamma[m][l][j] - gamma[i][l][m] * gamma[m][k][j];
                    }
                    r[i][j][k][l] = v;
                }
            }
        }
    }
    if r.iter().flatten().flatten().flatten().any(|v| !v.is_finite()) {
        return Err(Error::CurvatureUnavailable("non-finite curvature".into()));
    }
    Ok(Curvature {
        dim: n,
        metric: md.components,
        riemann: r,
    })
}
