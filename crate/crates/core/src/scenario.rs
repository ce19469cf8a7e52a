//! Scenario files: a TOML description of one computation, its outputs and
//! the acceptance thresholds it is checked against.
//!
//! ```toml
//! task = "sojourn_table"
//! seed = 7
//!
//! [model]
//! id = "flat_euclidean"
//! dim = 3
//!
//! [points]
//! z = [[1.0, 0.0, 0.0]]
//! dirs = [[0.0, 1.0, 0.0]]
//! ```
//!
//! [`run_scenario`] writes one CSV per table (with a `.meta.json` sidecar
//! holding the resolved scenario), a JSON-lines log and `summary.json`.

use crate::flow::{sojourn_limit, unit_covector, FlowOptions};
use crate::geometry::{
    chart_transition, collar_metric_in, curvature_operator, interior_metric, make_model, BoundaryChart, Chart,
    ChartPoint, CotangentPoint, GeometryKind, ManifoldModel, ModelId, ModelSpec,
};
use crate::io::{self, fmt_real, JsonLog, Table};
use crate::poisson::{
    calibrate_constant, compare_traces, conjugate_trace, euclidean_oracle_trace, h3_oracle_phase, h3_oracle_trace,
    mollify, scale_trace, synthesize_from_branches, Convention, KernelTrace, LambdaGrid, Mollifier,
};
use crate::radiation::{
    extract_radiation_field, flat_mode_trace, fourier_phase_slope, front_location, solve_rescaled_wave, PulseKind,
    PulseSpec, ReducedGrid,
};
use crate::sojourn::{find_branches, nondegeneracy_report, BranchSet, SearchOptions};
use crate::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: Error,
    },
    #[error("I/O error on {}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}

impl ScenarioError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Parse { .. } | ScenarioError::Validation(_) => 1,
            ScenarioError::Numerical { .. } => 2,
            ScenarioError::Io { .. } => 3,
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        ScenarioError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    SojournTable,
    BranchSearch,
    KernelSynthesis,
    OracleCompare,
    PdeCrossCheck,
    CatalogValidate,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub id: Option<ModelId>,
    pub kind: Option<GeometryKind>,
    pub dim: Option<usize>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub collar_x0: Option<f64>,
}

/// Random sweep: `count` base points and `count` directions or targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSweep {
    pub count: usize,
    /// Base points lie in the ball of this radius (scattering) or have
    /// `|y_i| ≤ radius` (AH). Also bounds AH targets.
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_radius() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Points {
    #[serde(default)]
    pub z: Vec<Vec<f64>>,
    /// Initial coframe directions (sojourn tables); normalised on use.
    #[serde(default)]
    pub dirs: Vec<Vec<f64>>,
    /// Boundary targets: unit vectors (scattering) or `ℝ^{n-1}` points (AH).
    #[serde(default)]
    pub y_target: Vec<Vec<f64>>,
    pub random: Option<RandomSweep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaSection {
    pub start: f64,
    pub end: f64,
    pub len: usize,
}

impl Default for LambdaSection {
    fn default() -> Self {
        Self {
            start: 10.0,
            end: 100.0,
            len: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MollifierSection {
    pub enabled: bool,
    pub w: f64,
}

impl Default for MollifierSection {
    fn default() -> Self {
        Self { enabled: true, w: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub starts: Option<usize>,
    pub conjugates: bool,
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            starts: None,
            conjugates: true,
        }
    }
}

/// Radial pulse problem for the PDE cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeSection {
    pub ell: usize,
    pub r0: f64,
    pub width: f64,
    pub power: u32,
    pub s_start: f64,
    pub s_end: f64,
    pub x_max: f64,
    pub dx: f64,
    /// Fraction of the peak that marks the front.
    pub front_threshold: f64,
    pub slope_window: [f64; 2],
}

impl Default for PdeSection {
    fn default() -> Self {
        Self {
            ell: 0,
            r0: 5.0,
            width: 0.2,
            power: 3,
            s_start: -8.0,
            s_end: 0.0,
            x_max: 1.0,
            dx: 2.5e-3,
            front_threshold: 0.05,
            slope_window: [5.0, 15.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub log: String,
    pub summary: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            log: "log.jsonl".into(),
            summary: "summary.json".into(),
        }
    }
}

/// Thresholds of the checks reported in the summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub euclidean_sojourn: f64,
    pub hyperbolic_sojourn: f64,
    pub kernel_rel_l2: f64,
    pub phase_slope: f64,
    pub amp_exponent: f64,
    pub front_steps: f64,
    pub pde_oracle: f64,
    pub fourier_slope_rel: f64,
    pub curvature: f64,
    pub chart_round_trip: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            euclidean_sojourn: 1e-8,
            hyperbolic_sojourn: 1e-6,
            kernel_rel_l2: 1e-9,
            phase_slope: 1e-5,
            amp_exponent: 1e-3,
            front_steps: 2.0,
            pde_oracle: 1e-3,
            fourier_slope_rel: 0.05,
            curvature: 1e-9,
            chart_round_trip: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub task: Option<Task>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub points: Points,
    #[serde(default)]
    pub lambda: LambdaSection,
    #[serde(default)]
    pub mollifier: MollifierSection,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub pde: PdeSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub acceptance: Thresholds,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map(|p| p + 1).unwrap_or(0) + 1;
    (line, column)
}

/// Parses and validates a scenario.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let s: Scenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|r| line_col(text, r.start)).unwrap_or((0, 0));
        ScenarioError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    s.validate()?;
    Ok(s)
}

/// Reads and parses a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
    parse_scenario(&text)
}

impl Scenario {
    pub fn task(&self) -> Task {
        self.task.expect("validated scenario has a task")
    }

    pub fn model_spec(&self) -> Option<ModelSpec> {
        Some(ModelSpec {
            id: self.model.id?,
            dim: self.model.dim?,
            params: self.model.params.clone(),
            collar_x0: self.model.collar_x0,
        })
    }

    /// Checks that every field the task needs is present and consistent.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut problems = Vec::new();
        if self.task.is_none() {
            problems.push("missing field `task`".to_string());
        }
        if self.model.id.is_none() {
            problems.push("missing field `model.id`".to_string());
        }
        if self.model.dim.is_none() {
            problems.push("missing field `model.dim`".to_string());
        }
        let model = self.model_spec().map(|spec| make_model(&spec));
        if let Some(Err(e)) = &model {
            problems.push(format!("model: {e}"));
        }
        if let (Some(id), Some(kind)) = (self.model.id, self.model.kind) {
            if id.kind() != kind {
                problems.push(format!("model.kind {kind:?} does not match model.id {}", id.name()));
            }
        }
        let n = self.model.dim.unwrap_or(0);
        let bdim = match self.model.id.map(ModelId::kind) {
            Some(GeometryKind::AsympHyperbolic) => n.saturating_sub(1),
            _ => n,
        };
        let has_random = self.points.random.map(|r| r.count > 0).unwrap_or(false);
        let need = |field: &str, list: &[Vec<f64>], len: usize, problems: &mut Vec<String>| {
            if list.is_empty() && !has_random {
                problems.push(format!("missing field `points.{field}` (or `points.random`)"));
            }
            for (i, p) in list.iter().enumerate() {
                if p.len() != len {
                    problems.push(format!("points.{field}[{i}] has {} entries, expected {len}", p.len()));
                }
            }
        };
        match self.task {
            Some(Task::SojournTable) => {
                need("z", &self.points.z, n, &mut problems);
                need("dirs", &self.points.dirs, n, &mut problems);
            }
            Some(Task::BranchSearch) | Some(Task::KernelSynthesis) | Some(Task::OracleCompare) => {
                need("z", &self.points.z, n, &mut problems);
                need("y_target", &self.points.y_target, bdim, &mut problems);
            }
            Some(Task::PdeCrossCheck) => {
                if let Some(Ok(m)) = &model {
                    if m.kind != GeometryKind::Scattering || m.dim != 3 || !m.is_radial() {
                        problems.push("pde_cross_check needs a radial scattering model with dim = 3".into());
                    }
                }
                if self.pde.ell > 1 {
                    problems.push("pde.ell must be 0 or 1".into());
                }
            }
            Some(Task::CatalogValidate) | None => {}
        }
        if self.task == Some(Task::OracleCompare)
            && !matches!(self.model.id, None | Some(ModelId::FlatEuclidean) | Some(ModelId::HyperbolicHn))
        {
            problems.push("oracle_compare needs model.id flat_euclidean or hyperbolic_hn".into());
        }
        if let Err(e) = LambdaGrid::uniform(self.lambda.start, self.lambda.end, self.lambda.len) {
            problems.push(format!("lambda: {e}"));
        }
        if self.mollifier.enabled && !(self.mollifier.w > 0.0) {
            problems.push("mollifier.w must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Validation(problems))
        }
    }

    fn lambda_grid(&self) -> LambdaGrid {
        LambdaGrid::uniform(self.lambda.start, self.lambda.end, self.lambda.len).expect("validated grid")
    }

    fn search_options(&self) -> SearchOptions {
        SearchOptions {
            starts: self.search.starts,
            with_conjugates: self.search.conjugates,
            ..SearchOptions::default()
        }
    }
}

/// One acceptance check of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }
}

/// Outcome of [`run_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub task: Task,
    pub files: Vec<PathBuf>,
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl RunReport {
    /// 0 when every check passed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            2
        }
    }
}

#[derive(Default)]
struct TaskOutput {
    tables: Vec<(String, Table)>,
    metrics: BTreeMap<String, f64>,
    checks: Vec<Check>,
    log: JsonLog,
}

fn numerical(context: String) -> impl FnOnce(Error) -> ScenarioError {
    move |source| ScenarioError::Numerical { context, source }
}

/// Runs a validated scenario, writing into its `output.dir`.
pub fn run_scenario(s: &Scenario) -> Result<RunReport, ScenarioError> {
    run_scenario_in(s, &s.output.dir.clone())
}

/// Runs a validated scenario, writing into `out`.
pub fn run_scenario_in(s: &Scenario, out: &Path) -> Result<RunReport, ScenarioError> {
    s.validate()?;
    std::fs::create_dir_all(out).map_err(|e| ScenarioError::io(out, e))?;
    let spec = s.model_spec().expect("validated model");
    let model = make_model(&spec).map_err(|e| ScenarioError::Validation(vec![format!("model: {e}")]))?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let output = match s.task() {
        Task::SojournTable => sojourn_table(s, &model, &mut rng)?,
        Task::BranchSearch => branch_search(s, &model, &mut rng)?,
        Task::KernelSynthesis => kernel_synthesis(s, &model, &mut rng)?,
        Task::OracleCompare => oracle_compare(s, &model, &mut rng)?,
        Task::PdeCrossCheck => pde_cross_check(s, &model)?,
        Task::CatalogValidate => catalog_validate(s, &model, &mut rng)?,
    };

    let mut files = Vec::new();
    for (name, table) in &output.tables {
        let path = io::write_table(out, name, table, s).map_err(|e| ScenarioError::io(out, e))?;
        files.push(path);
    }
    let log_path = out.join(&s.output.log);
    output.log.write(&log_path).map_err(|e| ScenarioError::io(&log_path, e))?;
    files.push(log_path);

    let passed = output.checks.iter().all(|c| c.passed);
    let summary_path = out.join(&s.output.summary);
    files.push(summary_path.clone());
    let report = RunReport {
        name: s.name.clone().unwrap_or_else(|| "scenario".into()),
        task: s.task(),
        files,
        metrics: output.metrics,
        checks: output.checks,
        passed,
    };
    let summary = serde_json::json!({
        "report": &report,
        "scenario": s,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(&summary_path, text).map_err(|e| ScenarioError::io(&summary_path, e))?;
    Ok(report)
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let l = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter().map(|a| a / l).collect()
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    if n == 2 {
        let t = rng.gen_range(0.0..std::f64::consts::TAU);
        vec![t.cos(), t.sin()]
    } else {
        let c: f64 = rng.gen_range(-1.0..1.0);
        let p = rng.gen_range(0.0..std::f64::consts::TAU);
        let r = (1.0 - c * c).sqrt();
        vec![r * p.cos(), r * p.sin(), c]
    }
}

fn random_base(rng: &mut ChaCha8Rng, model: &ManifoldModel, radius: f64) -> Vec<f64> {
    let n = model.dim;
    match model.kind {
        GeometryKind::Scattering => {
            let u = random_unit(rng, n);
            let r = radius * rng.gen_range(0.0f64..1.0).powf(1.0 / n as f64);
            u.iter().map(|v| r * v).collect()
        }
        GeometryKind::AsympHyperbolic => {
            let mut z = vec![rng.gen_range(0.3..2.0)];
            z.extend((1..n).map(|_| rng.gen_range(-radius..radius)));
            z
        }
    }
}

fn random_target(rng: &mut ChaCha8Rng, model: &ManifoldModel, radius: f64) -> Vec<f64> {
    match model.kind {
        GeometryKind::Scattering => random_unit(rng, model.dim),
        GeometryKind::AsympHyperbolic => (1..model.dim).map(|_| rng.gen_range(-radius..radius)).collect(),
    }
}

/// Listed points followed by the random sweep.
fn base_points(s: &Scenario, model: &ManifoldModel, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut z = s.points.z.clone();
    if let Some(r) = s.points.random {
        z.extend((0..r.count).map(|_| random_base(rng, model, r.radius)));
    }
    z
}

fn directions(s: &Scenario, model: &ManifoldModel, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut d: Vec<Vec<f64>> = s.points.dirs.iter().map(|v| normalize(v)).collect();
    if let Some(r) = s.points.random {
        d.extend((0..r.count).map(|_| random_unit(rng, model.dim)));
    }
    d
}

fn targets(s: &Scenario, model: &ManifoldModel, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut t: Vec<Vec<f64>> = s
        .points
        .y_target
        .iter()
        .map(|v| match model.kind {
            GeometryKind::Scattering => normalize(v),
            GeometryKind::AsympHyperbolic => v.clone(),
        })
        .collect();
    if let Some(r) = s.points.random {
        t.extend((0..r.count).map(|_| random_target(rng, model, r.radius)));
    }
    t
}

fn product(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<(Vec<f64>, Vec<f64>)> {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| (x.clone(), y.clone())))
        .collect()
}

fn pair_context(task: &str, z: &[f64], y: &[f64]) -> String {
    format!("{task} at z = {z:?}, {y:?}")
}

fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn reals(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| fmt_real(*x)).collect()
}

fn sojourn_table(s: &Scenario, model: &ManifoldModel, rng: &mut ChaCha8Rng) -> Result<TaskOutput, ScenarioError> {
    let z = base_points(s, model, rng);
    let d = directions(s, model, rng);
    let pairs = product(&z, &d);
    let flow = FlowOptions::default();
    let results: Vec<_> = pairs
        .par_iter()
        .map(|(z, u)| {
            let zeta = unit_covector(model, z, u)?;
            sojourn_limit(model, z, &zeta, &flow).map(|lim| (zeta, lim))
        })
        .collect();

    let n = model.dim;
    let bdim = match model.kind {
        GeometryKind::Scattering => n,
        GeometryKind::AsympHyperbolic => n - 1,
    };
    let mut cols = indexed("z", n);
    cols.extend(indexed("dir", n));
    cols.extend(["s", "sigma"].map(String::from));
    cols.extend(indexed("y", bdim));
    cols.extend(indexed("eta", bdim));
    cols.extend(["err", "oracle_s", "oracle_error"].map(String::from));
    let mut table = Table::new(&cols);
    let mut out = TaskOutput::default();
    let mut worst = 0.0f64;
    for ((z, u), r) in pairs.iter().zip(results) {
        let (zeta, lim) = r.map_err(numerical(pair_context("sojourn", z, u)))?;
        let oracle = match model.model_id {
            ModelId::FlatEuclidean => Some(-u.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()),
            ModelId::HyperbolicHn => Some(h3_oracle_phase(z, &lim.y)),
            _ => None,
        };
        let oracle_err = oracle.map(|o| (lim.s - o).abs());
        if let Some(e) = oracle_err {
            worst = worst.max(e);
        }
        let mut row = reals(z);
        row.extend(reals(u));
        row.push(fmt_real(lim.s));
        row.push(fmt_real(lim.sigma));
        row.extend(reals(&lim.y));
        row.extend(reals(&lim.eta));
        row.push(fmt_real(lim.err));
        row.push(fmt_real(oracle.unwrap_or(f64::NAN)));
        row.push(fmt_real(oracle_err.unwrap_or(f64::NAN)));
        table.push(row);
        out.log.record(&serde_json::json!({
            "kind": "sojourn",
            "z": z,
            "dir": u,
            "zeta": zeta,
            "limit": lim,
            "oracle_error": oracle_err,
        }));
    }
    out.metrics.insert("rows".into(), pairs.len() as f64);
    match model.model_id {
        ModelId::FlatEuclidean => {
            out.metrics.insert("max_sojourn_error".into(), worst);
            out.checks
                .push(Check::at_most("euclidean_sojourn_law", worst, s.acceptance.euclidean_sojourn));
        }
        ModelId::HyperbolicHn => {
            out.metrics.insert("max_sojourn_error".into(), worst);
            out.checks
                .push(Check::at_most("hyperbolic_sojourn_law", worst, s.acceptance.hyperbolic_sojourn));
        }
        _ => {}
    }
    out.tables.push(("sojourn".into(), table));
    Ok(out)
}

fn search_all(
    s: &Scenario,
    model: &ManifoldModel,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<BranchSet>, ScenarioError> {
    let z = base_points(s, model, rng);
    let y = targets(s, model, rng);
    let opts = s.search_options();
    // Branch search already fans out over its starts; pairs run in order.
    product(&z, &y)
        .iter()
        .map(|(z, y)| find_branches(model, z, y, &opts).map_err(numerical(pair_context("branch search", z, y))))
        .collect()
}

fn branch_search(s: &Scenario, model: &ManifoldModel, rng: &mut ChaCha8Rng) -> Result<TaskOutput, ScenarioError> {
    let sets = search_all(s, model, rng)?;
    let mut out = TaskOutput::default();
    let mut degenerate = 0usize;
    let mut worst = 0.0f64;
    let mut branches = 0usize;
    let mut max_k = 0usize;
    for set in &sets {
        let report = nondegeneracy_report(set);
        degenerate += report.failing.len();
        for b in &set.branches {
            branches += 1;
            max_k = max_k.max(b.conj_count);
            if model.model_id == ModelId::FlatEuclidean {
                let law: f64 = set.y_target.iter().zip(&set.z).map(|(a, b)| a * b).sum();
                worst = worst.max((b.limit.s + law).abs());
            }
            out.log.record(&serde_json::json!({
                "kind": "branch",
                "z": set.z,
                "y_target": set.y_target,
                "branch": b,
            }));
        }
        out.log.record(&serde_json::json!({
            "kind": "search",
            "z": set.z,
            "y_target": set.y_target,
            "meta": set.meta,
            "nondegeneracy": report,
        }));
    }
    out.metrics.insert("pairs".into(), sets.len() as f64);
    out.metrics.insert("branches".into(), branches as f64);
    out.metrics.insert("degenerate_branches".into(), degenerate as f64);
    out.metrics.insert("max_conjugate_count".into(), max_k as f64);
    if model.model_id == ModelId::FlatEuclidean {
        out.metrics.insert("max_sojourn_error".into(), worst);
        out.checks
            .push(Check::at_most("euclidean_sojourn_law", worst, s.acceptance.euclidean_sojourn));
    }
    let table = io::branch_table(&sets);
    out.metrics.insert(
        "table_digest".into(),
        u64::from_str_radix(&table.digest()[..12], 16).unwrap_or(0) as f64,
    );
    out.tables.push(("branches".into(), table));
    Ok(out)
}

fn synthesize_sets(
    s: &Scenario,
    model: &ManifoldModel,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(BranchSet, KernelTrace)>, ScenarioError> {
    let grid = s.lambda_grid();
    let conv = Convention::for_model(model);
    search_all(s, model, rng)?
        .into_iter()
        .map(|set| {
            let trace = synthesize_from_branches(&set, &grid, &conv)
                .map_err(numerical(pair_context("synthesis", &set.z, &set.y_target)))?;
            Ok((set, trace))
        })
        .collect()
}

fn mollified(s: &Scenario, t: &KernelTrace, context: &str) -> Result<Option<KernelTrace>, ScenarioError> {
    if !s.mollifier.enabled {
        return Ok(None);
    }
    let m = Mollifier::new(s.mollifier.w).map_err(numerical(context.into()))?;
    mollify(t, &m).map(Some).map_err(numerical(context.into()))
}

fn trace_log(kind: &str, index: usize, set: &BranchSet, t: &KernelTrace) -> serde_json::Value {
    serde_json::json!({
        "kind": kind,
        "index": index,
        "z": set.z,
        "y_target": set.y_target,
        "grid": t.grid,
        "mollifier": t.mollifier,
        "branches": t.branches,
        "max_abs": t.values.iter().map(|v| v.norm()).fold(0.0, f64::max),
    })
}

fn kernel_synthesis(s: &Scenario, model: &ManifoldModel, rng: &mut ChaCha8Rng) -> Result<TaskOutput, ScenarioError> {
    let mut out = TaskOutput::default();
    let sets = synthesize_sets(s, model, rng)?;
    for (i, (set, trace)) in sets.iter().enumerate() {
        out.log.record(&trace_log("trace", i, set, trace));
        out.tables.push((format!("trace_{i}"), io::kernel_trace_table(trace)));
        if let Some(m) = mollified(s, trace, "mollification")? {
            out.log.record(&trace_log("mollified_trace", i, set, &m));
            out.tables.push((format!("trace_{i}_mollified"), io::kernel_trace_table(&m)));
        }
    }
    out.metrics.insert("traces".into(), sets.len() as f64);
    out.metrics.insert(
        "branches".into(),
        sets.iter().map(|(set, _)| set.branches.len()).sum::<usize>() as f64,
    );
    Ok(out)
}

fn oracle_compare(s: &Scenario, model: &ManifoldModel, rng: &mut ChaCha8Rng) -> Result<TaskOutput, ScenarioError> {
    let mut out = TaskOutput::default();
    let sets = synthesize_sets(s, model, rng)?;
    let grid = s.lambda_grid();
    let n = model.dim as f64;
    let mut worst = BTreeMap::<&str, f64>::new();
    let mut bump = |k: &'static str, v: f64| {
        let e = worst.entry(k).or_insert(0.0);
        *e = e.max(v);
    };
    let mut constant = None;
    for (i, (set, trace)) in sets.iter().enumerate() {
        let ctx = pair_context("oracle compare", &set.z, &set.y_target);
        out.log.record(&trace_log("trace", i, set, trace));
        out.tables.push((format!("trace_{i}"), io::kernel_trace_table(trace)));
        match model.model_id {
            ModelId::FlatEuclidean => {
                let oracle = conjugate_trace(&euclidean_oracle_trace(&set.z, &set.y_target, &grid));
                let c = compare_traces(trace, &oracle, None).map_err(numerical(ctx.clone()))?;
                bump("kernel_rel_l2", c.rel_l2);
                out.tables.push((format!("oracle_{i}"), io::kernel_trace_table(&oracle)));
                out.log.record(&serde_json::json!({"kind": "comparison", "index": i, "mollified": false, "comparison": c}));
                if let (Some(a), Some(b)) = (mollified(s, trace, &ctx)?, mollified(s, &oracle, &ctx)?) {
                    let c = compare_traces(&a, &b, None).map_err(numerical(ctx.clone()))?;
                    bump("kernel_rel_l2_mollified", c.rel_l2);
                    out.tables.push((format!("trace_{i}_mollified"), io::kernel_trace_table(&a)));
                    out.log.record(&serde_json::json!({"kind": "comparison", "index": i, "mollified": true, "comparison": c}));
                }
            }
            _ => {
                let oracle = h3_oracle_trace(&set.z, &set.y_target, &grid);
                let c = compare_traces(trace, &oracle, None).map_err(numerical(ctx.clone()))?;
                let k = calibrate_constant(trace, &oracle).map_err(numerical(ctx.clone()))?;
                let calibrated = scale_trace(&oracle, k);
                let rel = compare_traces(trace, &calibrated, None).map_err(numerical(ctx))?.rel_l2;
                let expected = (n - 1.0) / 2.0 - 1.0;
                bump("phase_slope_error", c.phase_slope_diff.abs());
                bump("amp_exponent_error", (c.amp_exponent_a - expected).abs());
                bump("calibrated_rel_l2", rel);
                constant.get_or_insert(k);
                out.tables.push((format!("oracle_{i}"), io::kernel_trace_table(&calibrated)));
                out.log.record(&serde_json::json!({
                    "kind": "comparison",
                    "index": i,
                    "comparison": c,
                    "calibration": [k.re, k.im],
                    "calibrated_rel_l2": rel,
                }));
            }
        }
    }
    let t = &s.acceptance;
    for (name, v) in &worst {
        out.metrics.insert(format!("max_{name}"), *v);
        let threshold = match *name {
            "kernel_rel_l2" | "kernel_rel_l2_mollified" => Some(t.kernel_rel_l2),
            "phase_slope_error" => Some(t.phase_slope),
            "amp_exponent_error" => Some(t.amp_exponent),
            _ => None,
        };
        if let Some(th) = threshold {
            out.checks.push(Check::at_most(name, *v, th));
        }
    }
    if let Some(k) = constant {
        out.metrics.insert("calibration_re".into(), k.re);
        out.metrics.insert("calibration_im".into(), k.im);
    }
    out.metrics.insert("traces".into(), sets.len() as f64);
    Ok(out)
}

fn pde_cross_check(s: &Scenario, model: &ManifoldModel) -> Result<TaskOutput, ScenarioError> {
    let p = &s.pde;
    let ctx = || format!("pde cross-check with r0 = {}, dx = {}", p.r0, p.dx);
    let flat = model.model_id == ModelId::FlatEuclidean;
    let kind = if flat { PulseKind::Regular } else { PulseKind::Outgoing };
    let pulse = PulseSpec::new(p.r0, p.width, p.power, kind).map_err(numerical(ctx()))?;
    let grid = ReducedGrid::with_cfl(p.s_start, p.s_end, p.x_max, p.dx, p.ell).map_err(numerical(ctx()))?;
    let field = solve_rescaled_wave(model, &grid, &pulse).map_err(numerical(ctx()))?;
    let trace = extract_radiation_field(&field);
    let front = front_location(&trace, p.front_threshold).map_err(numerical(ctx()))?;

    let z = [p.r0, 0.0, 0.0];
    let zeta = unit_covector(model, &z, &[1.0, 0.0, 0.0]).map_err(numerical(ctx()))?;
    let expected = sojourn_limit(model, &z, &zeta, &FlowOptions::default())
        .map_err(numerical(ctx()))?
        .s;
    let front_error = (front.s_front - expected).abs();
    let slope = fourier_phase_slope(&trace, p.slope_window[0], p.slope_window[1], 64).map_err(numerical(ctx()))?;
    let slope_rel = (slope - expected).abs() / expected.abs();

    let mut out = TaskOutput::default();
    let t = &s.acceptance;
    out.metrics.insert("ds".into(), grid.ds);
    out.metrics.insert("flow_sojourn".into(), expected);
    out.metrics.insert("front".into(), front.s_front);
    out.metrics.insert("front_error".into(), front_error);
    out.metrics.insert("fourier_slope".into(), slope);
    out.metrics.insert("fourier_slope_rel_error".into(), slope_rel);
    out.metrics.insert("energy_final".into(), *field.energy.last().unwrap_or(&0.0));
    out.checks
        .push(Check::at_most("front_error", front_error, t.front_steps * grid.ds));
    out.checks
        .push(Check::at_most("fourier_slope_rel_error", slope_rel, t.fourier_slope_rel));
    let mut table = Table::new(&["s", "value", "oracle"]);
    let oracle: Vec<f64> = trace.s.iter().map(|&s| flat_mode_trace(&pulse, p.ell, s)).collect();
    for ((s, v), o) in trace.s.iter().zip(&trace.values).zip(&oracle) {
        table.push(vec![fmt_real(*s), fmt_real(*v), fmt_real(if flat { *o } else { f64::NAN })]);
    }
    if flat {
        let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = trace
            .values
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / scale;
        out.metrics.insert("oracle_rel_linf".into(), err);
        out.checks.push(Check::at_most("oracle_rel_linf", err, t.pde_oracle));
    }
    out.log.record(&serde_json::json!({
        "kind": "radiation_trace",
        "grid": grid,
        "pulse": pulse,
        "front": front,
        "flow_sojourn": expected,
        "fourier_slope": slope,
    }));
    out.tables.push(("radiation".into(), table));
    Ok(out)
}

fn catalog_validate(s: &Scenario, model: &ManifoldModel, rng: &mut ChaCha8Rng) -> Result<TaskOutput, ScenarioError> {
    let n = model.dim;
    let count = s.points.random.map(|r| r.count).unwrap_or(32);
    let mut out = TaskOutput::default();
    let mut table = Table::new(&[
        "sample",
        "chart",
        "min_eig_proxy",
        "symmetry_defect",
        "max_sectional",
        "min_sectional",
        "round_trip",
        "norm_defect",
    ]);
    let boundary = BoundaryChart::default_for(model);
    let limit = model.collar_limit();
    let (mut worst_sym, mut worst_curv, mut worst_trip) = (0.0f64, 0.0f64, 0.0f64);
    let mut not_pd = 0usize;
    for k in 0..count {
        let ctx = || format!("catalog sample {k}");
        // Interior sample in the collar overlap so the transition applies.
        let z: Vec<f64> = match model.kind {
            GeometryKind::Scattering => {
                let r = rng.gen_range(1.0 / limit..3.0 / limit);
                random_unit(rng, n).iter().map(|v| r * v).collect()
            }
            GeometryKind::AsympHyperbolic => {
                let mut z = vec![rng.gen_range(0.05 * limit..limit)];
                z.extend((1..n).map(|_| rng.gen_range(-2.0..2.0)));
                z
            }
        };
        let im = interior_metric(model, &z).map_err(numerical(ctx()))?;
        let pd = im.metric.is_positive_definite();
        if !pd {
            not_pd += 1;
        }
        let curv = curvature_operator(model, &z).map_err(numerical(ctx()))?;
        let sym = curv.symmetry_defect();
        let basis: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let mut secs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                secs.push(curv.sectional(&basis[i], &basis[j]));
            }
        }
        let smax = secs.iter().cloned().fold(f64::MIN, f64::max);
        let smin = secs.iter().cloned().fold(f64::MAX, f64::min);
        let target = match model.model_id {
            ModelId::FlatEuclidean => Some(0.0),
            ModelId::HyperbolicHn => Some(-1.0),
            _ => None,
        };
        if let Some(t) = target {
            worst_curv = worst_curv.max((smax - t).abs()).max((smin - t).abs());
        }
        worst_sym = worst_sym.max(sym);

        let cov = random_unit(rng, n);
        let p = CotangentPoint {
            point: ChartPoint {
                chart: Chart::Interior,
                coords: z.clone(),
            },
            covector: cov.clone(),
        };
        let there = chart_transition(model, &p, &boundary).map_err(numerical(ctx()))?;
        let back = chart_transition(model, &there, &boundary).map_err(numerical(ctx()))?;
        let trip = z
            .iter()
            .zip(&back.point.coords)
            .chain(cov.iter().zip(&back.covector))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst_trip = worst_trip.max(trip);
        let cm = collar_metric_in(model, &boundary, there.point.coords[0], &there.point.coords[1..])
            .map_err(numerical(ctx()))?;
        let x = there.point.coords[0];
        let xi = there.covector[0];
        let collar_norm2 = match model.kind {
            GeometryKind::Scattering => x.powi(4) * xi * xi,
            GeometryKind::AsympHyperbolic => x * x * xi * xi,
        } + x * x * cm.covector_norm2(&there.covector[1..]);
        let norm_defect =
            (collar_norm2 - im.metric.covector_norm2(&cov)).abs() / im.metric.covector_norm2(&cov);
        worst_trip = worst_trip.max(norm_defect);
        table.push(vec![
            k.to_string(),
            "interior".into(),
            if pd { "1".into() } else { "0".into() },
            fmt_real(sym),
            fmt_real(smax),
            fmt_real(smin),
            fmt_real(trip),
            fmt_real(norm_defect),
        ]);
        out.log.record(&serde_json::json!({
            "kind": "catalog_sample",
            "index": k,
            "z": z,
            "positive_definite": pd,
            "symmetry_defect": sym,
            "sectional": secs,
            "round_trip": trip,
            "norm_defect": norm_defect,
        }));
    }
    let t = &s.acceptance;
    out.metrics.insert("samples".into(), count as f64);
    out.metrics.insert("not_positive_definite".into(), not_pd as f64);
    out.metrics.insert("max_symmetry_defect".into(), worst_sym);
    out.metrics.insert("max_chart_defect".into(), worst_trip);
    out.checks.push(Check::at_most("not_positive_definite", not_pd as f64, 0.0));
    out.checks
        .push(Check::at_most("chart_round_trip", worst_trip, t.chart_round_trip));
    if model.is_exact() {
        out.metrics.insert("max_curvature_error".into(), worst_curv);
        out.checks.push(Check::at_most("constant_curvature", worst_curv, t.curvature));
    }
    out.tables.push(("catalog".into(), table));
    Ok(out)
}
