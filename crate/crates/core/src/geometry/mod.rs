//! Model manifolds in boundary normal form.
//!
//! Four analytic models are provided, each with a global interior chart and
//! a boundary collar chart `(x, y)`:
//!
//! | model                 | class        | interior chart          | collar metric `h(x, y)`             |
//! |-----------------------|--------------|-------------------------|-------------------------------------|
//! | `FlatEuclidean`       | scattering   | Cartesian `z`           | round metric on the sphere          |
//! | `HyperbolicHn`        | asympt. hyp. | half-space `(x, y)`     | `dy²`                               |
//! | `PerturbedScattering` | scattering   | Cartesian `z`           | `(1 + a q(x) f(y)) · round`         |
//! | `PerturbedAH`         | asympt. hyp. | half-space `(x, y)`     | `(1 + a q(x) f(y)) · dy²`           |
//!
//! Scattering metrics read `dx²/x⁴ + h/x²` in the collar, asymptotically
//! hyperbolic ones `(dx² + h)/x²`. The profile `q(x)` equals `x` throughout
//! the collar and is smoothly cut off deeper inside so that the interior
//! metric stays smooth and positive definite. See `docs/models.md`.

mod chart;
mod curvature;
mod metric;

pub use chart::{chart_transition, BoundaryChart, Chart, ChartPoint, CotangentPoint};
pub use curvature::{curvature_operator, Curvature};
pub use metric::{collar_metric, collar_metric_in, interior_metric, CollarScalar, InteriorMetric, MetricData};
pub(crate) use metric::interior_metric_data;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Geometry class of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeometryKind {
    Scattering,
    AsympHyperbolic,
}

/// Catalog identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    FlatEuclidean,
    HyperbolicHn,
    PerturbedScattering,
    #[serde(rename = "perturbed_ah")]
    PerturbedAH,
}

impl ModelId {
    pub fn kind(self) -> GeometryKind {
        match self {
            ModelId::FlatEuclidean | ModelId::PerturbedScattering => GeometryKind::Scattering,
            ModelId::HyperbolicHn | ModelId::PerturbedAH => GeometryKind::AsympHyperbolic,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelId::FlatEuclidean => "flat_euclidean",
            ModelId::HyperbolicHn => "hyperbolic_hn",
            ModelId::PerturbedScattering => "perturbed_scattering",
            ModelId::PerturbedAH => "perturbed_ah",
        }
    }
}

impl std::str::FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat_euclidean" | "FlatEuclidean" => Ok(ModelId::FlatEuclidean),
            "hyperbolic_hn" | "HyperbolicHn" => Ok(ModelId::HyperbolicHn),
            "perturbed_scattering" | "PerturbedScattering" => Ok(ModelId::PerturbedScattering),
            "perturbed_ah" | "PerturbedAH" => Ok(ModelId::PerturbedAH),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

/// Request for [`make_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: ModelId,
    pub dim: usize,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub collar_x0: Option<f64>,
}

impl ModelSpec {
    pub fn new(id: ModelId, dim: usize) -> Self {
        Self {
            id,
            dim,
            params: BTreeMap::new(),
            collar_x0: None,
        }
    }

    pub fn param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }
}

/// Largest perturbation amplitude accepted by the catalog.
pub const MAX_AMPLITUDE: f64 = 0.3;
/// Allowed range of the angular profile width.
pub const WIDTH_RANGE: (f64, f64) = (0.05, 10.0);
pub const DEFAULT_COLLAR_X0: f64 = 0.2;

/// A catalog manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldModel {
    pub kind: GeometryKind,
    pub dim: usize,
    pub model_id: ModelId,
    pub params: BTreeMap<String, f64>,
    pub collar_x0: f64,
}

/// Builds a validated model from a catalog request.
pub fn make_model(spec: &ModelSpec) -> Result<ManifoldModel> {
    if !(2..=3).contains(&spec.dim) {
        return Err(Error::ParamOutOfRange {
            name: "dim".into(),
            value: spec.dim as f64,
            range: "{2, 3}".into(),
        });
    }
    let allowed: &[&str] = match spec.id {
        ModelId::FlatEuclidean | ModelId::HyperbolicHn => &[],
        ModelId::PerturbedScattering => &["a", "w", "radial"],
        ModelId::PerturbedAH => &["a", "w"],
    };
    let mut params = BTreeMap::new();
    for (k, &v) in &spec.params {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::ParamOutOfRange {
                name: k.clone(),
                value: v,
                range: format!("not a parameter of {}", spec.id.name()),
            });
        }
        if !v.is_finite() {
            return Err(Error::ParamOutOfRange {
                name: k.clone(),
                value: v,
                range: "finite".into(),
            });
        }
        params.insert(k.clone(), v);
    }
    if matches!(spec.id, ModelId::PerturbedScattering | ModelId::PerturbedAH) {
        let a = *params.entry("a".into()).or_insert(0.0);
        let w = *params.entry("w".into()).or_insert(1.0);
        if a.abs() > MAX_AMPLITUDE {
            return Err(Error::ParamOutOfRange {
                name: "a".into(),
                value: a,
                range: format!("[-{MAX_AMPLITUDE}, {MAX_AMPLITUDE}]"),
            });
        }
        if !(WIDTH_RANGE.0..=WIDTH_RANGE.1).contains(&w) {
            return Err(Error::ParamOutOfRange {
                name: "w".into(),
                value: w,
                range: format!("[{}, {}]", WIDTH_RANGE.0, WIDTH_RANGE.1),
            });
        }
        if let Some(&r) = params.get("radial") {
            if r != 0.0 && r != 1.0 {
                return Err(Error::ParamOutOfRange {
                    name: "radial".into(),
                    value: r,
                    range: "{0, 1}".into(),
                });
            }
        }
    }
    let kind = spec.id.kind();
    let limit = collar_limit(kind);
    let collar_x0 = spec.collar_x0.unwrap_or(DEFAULT_COLLAR_X0);
    if !(collar_x0 > 0.0 && collar_x0 <= limit) {
        return Err(Error::ParamOutOfRange {
            name: "collar_x0".into(),
            value: collar_x0,
            range: format!("(0, {limit}]"),
        });
    }
    Ok(ManifoldModel {
        kind,
        dim: spec.dim,
        model_id: spec.id,
        params,
        collar_x0,
    })
}

/// Largest `x` at which the catalog collar formula holds verbatim.
pub fn collar_limit(kind: GeometryKind) -> f64 {
    match kind {
        GeometryKind::Scattering => SCATTERING_CUTOFF.0,
        GeometryKind::AsympHyperbolic => AH_CUTOFF.0,
    }
}

/// `q(x) = x` for `x <= .0`, smoothly switched off by `x >= .1`.
const SCATTERING_CUTOFF: (f64, f64) = (0.5, 1.0);
const AH_CUTOFF: (f64, f64) = (1.0, 2.0);

impl ManifoldModel {
    pub fn flat(dim: usize) -> Self {
        make_model(&ModelSpec::new(ModelId::FlatEuclidean, dim)).expect("flat model")
    }

    pub fn hyperbolic(dim: usize) -> Self {
        make_model(&ModelSpec::new(ModelId::HyperbolicHn, dim)).expect("hyperbolic model")
    }

    pub fn perturbed_scattering(dim: usize, a: f64, w: f64) -> Result<Self> {
        make_model(&ModelSpec::new(ModelId::PerturbedScattering, dim).param("a", a).param("w", w))
    }

    pub fn perturbed_ah(dim: usize, a: f64, w: f64) -> Result<Self> {
        make_model(&ModelSpec::new(ModelId::PerturbedAH, dim).param("a", a).param("w", w))
    }

    /// Rotationally symmetric perturbed scattering model (`f ≡ 1`).
    pub fn radial_scattering(dim: usize, a: f64) -> Result<Self> {
        make_model(
            &ModelSpec::new(ModelId::PerturbedScattering, dim)
                .param("a", a)
                .param("radial", 1.0),
        )
    }

    pub fn with_collar_x0(mut self, x0: f64) -> Result<Self> {
        let limit = collar_limit(self.kind);
        if !(x0 > 0.0 && x0 <= limit) {
            return Err(Error::ParamOutOfRange {
                name: "collar_x0".into(),
                value: x0,
                range: format!("(0, {limit}]"),
            });
        }
        self.collar_x0 = x0;
        Ok(self)
    }

    pub fn amplitude(&self) -> f64 {
        self.params.get("a").copied().unwrap_or(0.0)
    }

    pub fn width(&self) -> f64 {
        self.params.get("w").copied().unwrap_or(1.0)
    }

    pub fn is_radial(&self) -> bool {
        match self.model_id {
            ModelId::FlatEuclidean => true,
            ModelId::PerturbedScattering => self.params.get("radial").copied().unwrap_or(0.0) == 1.0,
            _ => false,
        }
    }

    /// True for the two exact models with closed-form curvature.
    pub fn is_exact(&self) -> bool {
        matches!(self.model_id, ModelId::FlatEuclidean | ModelId::HyperbolicHn)
    }

    pub fn collar_limit(&self) -> f64 {
        collar_limit(self.kind)
    }

    /// Boundary-defining function evaluated at an interior chart point.
    pub fn boundary_x(&self, z: &[f64]) -> f64 {
        match self.kind {
            GeometryKind::Scattering => 1.0 / crate::linalg::norm(&z[..self.dim]),
            GeometryKind::AsympHyperbolic => z[0],
        }
    }

    /// Radial profile `q(x)` and its derivative.
    pub(crate) fn radial_profile(&self, x: f64) -> (f64, f64) {
        let (x1, x2) = match self.kind {
            GeometryKind::Scattering => SCATTERING_CUTOFF,
            GeometryKind::AsympHyperbolic => AH_CUTOFF,
        };
        let (psi, dpsi) = smooth_cutoff(x, x1, x2);
        (x * psi, psi + x * dpsi)
    }

    /// Angular profile `f` on the boundary and its gradient.
    ///
    /// Scattering models take `ω ∈ S^{n-1} ⊂ ℝⁿ` and return the ambient
    /// gradient; AH models take `y ∈ ℝ^{n-1}`.
    pub(crate) fn angular_profile(&self, p: &[f64]) -> (f64, [f64; 3]) {
        let w = self.width();
        let mut grad = [0.0; 3];
        match self.kind {
            GeometryKind::Scattering => {
                if self.is_radial() {
                    return (1.0, grad);
                }
                // |ω - e₁|² = 2 - 2 ω₁
                let f = (-(2.0 - 2.0 * p[0]) / (w * w)).exp();
                grad[0] = f * 2.0 / (w * w);
                (f, grad)
            }
            GeometryKind::AsympHyperbolic => {
                let r2: f64 = p.iter().map(|v| v * v).sum();
                let f = (-r2 / (w * w)).exp();
                for (g, v) in grad.iter_mut().zip(p) {
                    *g = -2.0 * v * f / (w * w);
                }
                (f, grad)
            }
        }
    }

    /// Scale used by the trapping budget.
    pub(crate) fn diameter_scale(&self, z: &[f64]) -> f64 {
        match self.kind {
            GeometryKind::Scattering => crate::linalg::norm(&z[..self.dim]).max(1.0 / self.collar_x0),
            GeometryKind::AsympHyperbolic => 1.0 + z[0].ln().abs() + self.collar_x0.ln().abs(),
        }
    }
}

/// C^∞ step: 1 for `x <= x1`, 0 for `x >= x2`; returns value and derivative.
pub fn smooth_cutoff(x: f64, x1: f64, x2: f64) -> (f64, f64) {
    fn bump(t: f64) -> (f64, f64) {
        if t <= 0.0 {
            (0.0, 0.0)
        } else {
            let v = (-1.0 / t).exp();
            (v, v / (t * t))
        }
    }
    if x <= x1 {
        return (1.0, 0.0);
    }
    if x >= x2 {
        return (0.0, 0.0);
    }
    let (a, da) = bump(x2 - x);
    let (b, db) = bump(x - x1);
    let s = a + b;
    // d/dx a = -da, d/dx b = db
    let val = a / s;
    let der = (-da * s - a * (-da + db)) / (s * s);
    (val, der)
}
