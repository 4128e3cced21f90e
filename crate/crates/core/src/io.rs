//! Instance files and solution reports.
//!
//! Both are TOML documents. The instance grammar is described in
//! `docs/instance-format.md`; solutions are written by hand so every float
//! carries 17 significant digits.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::f64::consts::PI;

use serde::Deserialize;
use thiserror::Error;

use crate::circlegeom::Geometry;
use crate::conditions::{AttainabilityReport, CurvatureTarget};
use crate::curvature::{AngleAssignment, CurvatureError, RadiusVector};
use crate::layout::EmbeddedPattern;
use crate::mesh::TriangulatedSurface;
use crate::solver::{Method, SolveReport, DEFAULT_TOLERANCE};

/// History entries kept in a written solution.
pub const MAX_HISTORY_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IoError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid instance ({constraint}): {detail}")]
    Validation { constraint: &'static str, detail: String },
}

fn invalid(constraint: &'static str, detail: impl Into<String>) -> IoError {
    IoError::Validation {
        constraint,
        detail: detail.into(),
    }
}

fn parse_error(text: &str, err: &toml::de::Error) -> IoError {
    let (line, column) = match err.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    IoError::Parse {
        line,
        column,
        message: err.message().trim().to_string(),
    }
}

/// A number, or a multiple of π such as `"pi/2"`, `"2pi/3"`, `"0.9pi"`, `"3*pi/4"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum AngleValue {
    Integer(i64),
    Float(f64),
    Text(String),
}

impl AngleValue {
    pub fn to_f64(&self) -> Result<f64, String> {
        match self {
            AngleValue::Integer(i) => Ok(*i as f64),
            AngleValue::Float(x) => Ok(*x),
            AngleValue::Text(s) => parse_angle_expression(s),
        }
    }
}

/// Evaluate `[sign][coefficient][*]pi[/denominator]` or a plain number.
pub fn parse_angle_expression(text: &str) -> Result<f64, String> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let lower = s.to_ascii_lowercase();
    let Some(pos) = lower.find("pi") else {
        return lower.parse::<f64>().map_err(|_| format!("`{text}` is not a number or multiple of pi"));
    };
    let bad = || format!("`{text}` is not a number or multiple of pi");
    let (head, tail) = (&lower[..pos], &lower[pos + 2..]);
    let head = head.strip_suffix('*').unwrap_or(head);
    let coefficient = match head {
        "" | "+" => 1.0,
        "-" => -1.0,
        h => h.parse::<f64>().map_err(|_| bad())?,
    };
    let denominator = match tail {
        "" => 1.0,
        t => {
            let d = t.strip_prefix('/').ok_or_else(bad)?;
            d.parse::<f64>().map_err(|_| bad())?
        }
    };
    if denominator == 0.0 {
        return Err(bad());
    }
    Ok(coefficient * PI / denominator)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    geometry: String,
    triangles: Vec<[usize; 3]>,
    theta: BTreeMap<String, AngleValue>,
    #[serde(default)]
    target: Option<RawTarget>,
    #[serde(default)]
    initial: Option<RawInitial>,
    #[serde(default)]
    solver: Option<RawSolver>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTarget {
    mode: String,
    #[serde(default)]
    k: Option<Vec<AngleValue>>,
    #[serde(default)]
    phi: Option<BTreeMap<String, AngleValue>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    radii: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    #[serde(default)]
    method: Option<String>,
    #[serde(default)]
    tol: Option<f64>,
    #[serde(default)]
    max_steps: Option<usize>,
    #[serde(default)]
    dt_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetMode {
    Zero,
    /// `2πχ/|V|` at every vertex; Euclidean only.
    Mean,
    Explicit(Vec<f64>),
    /// Turning values at boundary vertices, zero inside.
    BoundaryPhi(Vec<(usize, f64)>),
}

impl TargetMode {
    pub fn name(&self) -> &'static str {
        match self {
            TargetMode::Zero => "zero",
            TargetMode::Mean => "mean",
            TargetMode::Explicit(_) => "explicit",
            TargetMode::BoundaryPhi(_) => "boundary-phi",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub method: Method,
    pub tol: f64,
    /// Flow steps or Newton iterations; the method default when absent.
    pub max_steps: Option<usize>,
    /// Largest flow time step; the flow default when absent.
    pub dt_max: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: Method::Newton,
            tol: DEFAULT_TOLERANCE,
            max_steps: None,
            dt_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub surface: TriangulatedSurface,
    pub geometry: Geometry,
    pub theta: AngleAssignment,
    pub target_mode: TargetMode,
    pub target: CurvatureTarget,
    pub initial_radii: RadiusVector,
    pub solver: SolverOptions,
}

fn build_target(
    surface: &TriangulatedSurface,
    geometry: Geometry,
    mode: &TargetMode,
) -> Result<CurvatureTarget, IoError> {
    match mode {
        TargetMode::Zero => Ok(CurvatureTarget::zero(surface, geometry)),
        TargetMode::Mean => {
            if geometry != Geometry::Euclidean {
                return Err(invalid("target.mode", "mean-curvature targets are Euclidean only"));
            }
            Ok(CurvatureTarget::mean(surface, geometry))
        }
        TargetMode::Explicit(k) => CurvatureTarget::explicit(surface, geometry, k.clone())
            .map_err(|e| invalid("target.k", format!("{e} (one value per vertex)"))),
        TargetMode::BoundaryPhi(phi) => {
            if !surface.has_boundary() {
                return Err(invalid(
                    "target.phi",
                    "boundary-phi target on a surface without boundary vertices",
                ));
            }
            CurvatureTarget::boundary_phi(surface, geometry, phi).map_err(|e| invalid("target.phi", e.to_string()))
        }
    }
}

impl ProblemInstance {
    /// The same instance in another background geometry.
    pub fn with_geometry(&self, geometry: Geometry) -> Result<Self, IoError> {
        let target = build_target(&self.surface, geometry, &self.target_mode)?;
        Ok(Self {
            geometry,
            target,
            ..self.clone()
        })
    }

    /// Replace the initial radii, for example with a previous solution.
    pub fn with_initial_radii(&self, radii: Vec<f64>) -> Result<Self, IoError> {
        if radii.len() != self.surface.vertex_count() {
            return Err(invalid(
                "initial.radii",
                format!("expected {} radii, found {}", self.surface.vertex_count(), radii.len()),
            ));
        }
        let initial_radii = RadiusVector::new(radii).map_err(|e| invalid("initial.radii", e.to_string()))?;
        Ok(Self {
            initial_radii,
            ..self.clone()
        })
    }
}

fn parse_edge_key(key: &str) -> Result<(usize, usize), IoError> {
    let bad = || invalid("theta key", format!("`{key}` is not of the form \"i-j\" with i < j"));
    let (a, b) = key.split_once('-').ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a >= b {
        return Err(bad());
    }
    Ok((a, b))
}

pub fn parse_instance(text: &str) -> Result<ProblemInstance, IoError> {
    let raw: RawInstance = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
    let geometry: Geometry = raw.geometry.parse().map_err(|e: String| invalid("geometry", e))?;
    let surface = TriangulatedSurface::build(&raw.triangles).map_err(|e| invalid("triangles", e.to_string()))?;

    let mut pairs = HashMap::new();
    for (key, value) in &raw.theta {
        let (a, b) = parse_edge_key(key)?;
        let t = value.to_f64().map_err(|e| invalid("theta value", format!("edge {key}: {e}")))?;
        if !(0.0..PI).contains(&t) {
            return Err(invalid("theta range", format!("edge {key}: {t} is outside [0, pi)")));
        }
        pairs.insert((a, b), t);
    }
    let theta = AngleAssignment::from_pairs(&surface, &pairs).map_err(|e| match e {
        CurvatureError::MissingEdge { a, b } => invalid("theta coverage", format!("missing theta for edge {a}-{b}")),
        CurvatureError::UnknownEdge { a, b } => invalid("theta coverage", format!("{a}-{b} is not an edge")),
        other => invalid("theta", other.to_string()),
    })?;

    let target_mode = match &raw.target {
        None => TargetMode::Zero,
        Some(t) => {
            let mode = match t.mode.as_str() {
                "zero" => TargetMode::Zero,
                "mean" => TargetMode::Mean,
                "explicit" => {
                    let k = t.k.as_ref().ok_or_else(|| invalid("target.k", "explicit target needs `k`"))?;
                    TargetMode::Explicit(
                        k.iter()
                            .enumerate()
                            .map(|(v, x)| x.to_f64().map_err(|e| invalid("target.k", format!("vertex {v}: {e}"))))
                            .collect::<Result<_, _>>()?,
                    )
                }
                "boundary-phi" => {
                    let phi = t.phi.as_ref().ok_or_else(|| invalid("target.phi", "boundary-phi target needs `phi`"))?;
                    let mut out = Vec::new();
                    for (key, value) in phi {
                        let v: usize = key
                            .trim()
                            .parse()
                            .map_err(|_| invalid("target.phi", format!("`{key}` is not a vertex index")))?;
                        let x = value.to_f64().map_err(|e| invalid("target.phi", format!("vertex {v}: {e}")))?;
                        out.push((v, x));
                    }
                    out.sort_by_key(|p| p.0);
                    TargetMode::BoundaryPhi(out)
                }
                other => {
                    return Err(invalid(
                        "target.mode",
                        format!("unknown mode `{other}` (expected zero, mean, explicit or boundary-phi)"),
                    ))
                }
            };
            let extra = match &mode {
                TargetMode::Explicit(_) => t.phi.is_some(),
                TargetMode::BoundaryPhi(_) => t.k.is_some(),
                _ => t.k.is_some() || t.phi.is_some(),
            };
            if extra {
                return Err(invalid("target", format!("mode `{}` does not take these fields", t.mode)));
            }
            mode
        }
    };
    let target = build_target(&surface, geometry, &target_mode)?;

    let n = surface.vertex_count();
    let radii = match &raw.initial {
        Some(init) => init.radii.clone(),
        None => vec![1.0; n],
    };
    if radii.len() != n {
        return Err(invalid(
            "initial.radii",
            format!("expected {n} radii, found {}", radii.len()),
        ));
    }
    let initial_radii = RadiusVector::new(radii).map_err(|e| invalid("initial.radii", e.to_string()))?;

    let mut solver = SolverOptions::default();
    if let Some(s) = &raw.solver {
        if let Some(m) = &s.method {
            solver.method = m.parse().map_err(|e: String| invalid("solver.method", e))?;
        }
        if let Some(tol) = s.tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(invalid("solver.tol", format!("{tol} is not positive")));
            }
            solver.tol = tol;
        }
        if let Some(m) = s.max_steps {
            if m == 0 {
                return Err(invalid("solver.max_steps", "must be positive"));
            }
            solver.max_steps = Some(m);
        }
        if let Some(dt) = s.dt_max {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(invalid("solver.dt_max", format!("{dt} is not positive")));
            }
            solver.dt_max = Some(dt);
        }
    }

    Ok(ProblemInstance {
        surface,
        geometry,
        theta,
        target_mode,
        target,
        initial_radii,
        solver,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum SolutionStatus {
    #[serde(rename = "converged")]
    Converged,
    #[serde(rename = "not-attainable-suspected")]
    NotAttainableSuspected,
    #[serde(rename = "not-converged")]
    NotConverged,
}

impl SolutionStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolutionStatus::Converged => "converged",
            SolutionStatus::NotAttainableSuspected => "not-attainable-suspected",
            SolutionStatus::NotConverged => "not-converged",
        }
    }

    pub fn classify(report: &SolveReport, attainability: Option<&AttainabilityReport>) -> Self {
        if report.converged() {
            SolutionStatus::Converged
        } else if attainability.is_some_and(|a| !a.attainable) {
            SolutionStatus::NotAttainableSuspected
        } else {
            SolutionStatus::NotConverged
        }
    }
}

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

fn fmt_array(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|&x| fmt_f64(x)).collect();
    format!("[{}]", items.join(", "))
}

/// Indices kept when thinning a history to at most `MAX_HISTORY_POINTS`,
/// always including the last entry.
fn history_indices(len: usize) -> (usize, Vec<usize>) {
    let stride = len.div_ceil(MAX_HISTORY_POINTS).max(1);
    let mut idx: Vec<usize> = (0..len).step_by(stride).collect();
    if len > 0 && idx.last() != Some(&(len - 1)) {
        idx.push(len - 1);
    }
    (stride, idx)
}

pub fn write_solution(
    report: &SolveReport,
    tolerance: f64,
    attainability: Option<&AttainabilityReport>,
    pattern: Option<&EmbeddedPattern>,
) -> String {
    let status = SolutionStatus::classify(report, attainability);
    let mut s = String::new();
    let _ = writeln!(s, "status = \"{}\"", status.name());
    let _ = writeln!(s, "method = \"{}\"", report.method.name());
    let _ = writeln!(s, "geometry = \"{}\"", report.geometry);
    let _ = writeln!(s, "iterations = {}", report.iterations);
    let _ = writeln!(s, "residual = {}", fmt_f64(report.residual()));
    let _ = writeln!(s, "tolerance = {}", fmt_f64(tolerance));
    let _ = writeln!(s, "sum_u_drift = {}", fmt_f64(report.sum_u_drift));
    if let Some(fit) = report.fitted_rate {
        let _ = writeln!(s, "fitted_rate = {}", fmt_f64(fit.rate));
        let _ = writeln!(s, "fitted_rate_r_squared = {}", fmt_f64(fit.r_squared));
    }
    if let Some(a) = attainability {
        let _ = writeln!(s, "attainable = {}", a.attainable);
        let _ = writeln!(s, "attainability_exhaustive = {}", a.exhaustive);
    }
    let _ = writeln!(s, "radii = {}", fmt_array(&report.r));
    let _ = writeln!(s, "u = {}", fmt_array(&report.u));
    let _ = writeln!(s, "curvatures = {}", fmt_array(&report.curvature));
    let _ = writeln!(s, "target = {}", fmt_array(&report.target));
    if let Some(p) = pattern {
        let items: Vec<String> = p
            .centers
            .iter()
            .map(|c| format!("[{}, {}]", fmt_f64(c.re), fmt_f64(c.im)))
            .collect();
        let _ = writeln!(s, "centers = [{}]", items.join(", "));
    }
    let (stride, idx) = history_indices(report.residual_history.len());
    let pick = |xs: &[f64]| idx.iter().map(|&i| xs[i]).collect::<Vec<f64>>();
    let _ = writeln!(s, "\n[history]");
    let _ = writeln!(s, "stride = {stride}");
    let _ = writeln!(s, "length = {}", report.residual_history.len());
    let _ = writeln!(s, "times = {}", fmt_array(&pick(&report.times)));
    let _ = writeln!(s, "residuals = {}", fmt_array(&pick(&report.residual_history)));
    s
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionHistory {
    pub stride: usize,
    pub length: usize,
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// A solution file read back.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Solution {
    pub status: SolutionStatus,
    pub method: String,
    pub geometry: Geometry,
    pub iterations: usize,
    pub residual: f64,
    pub tolerance: f64,
    pub sum_u_drift: f64,
    #[serde(default)]
    pub fitted_rate: Option<f64>,
    #[serde(default)]
    pub fitted_rate_r_squared: Option<f64>,
    #[serde(default)]
    pub attainable: Option<bool>,
    #[serde(default)]
    pub attainability_exhaustive: Option<bool>,
    pub radii: Vec<f64>,
    pub u: Vec<f64>,
    pub curvatures: Vec<f64>,
    pub target: Vec<f64>,
    #[serde(default)]
    pub centers: Option<Vec<[f64; 2]>>,
    pub history: SolutionHistory,
}

pub fn parse_solution(text: &str) -> Result<Solution, IoError> {
    toml::from_str(text).map_err(|e| parse_error(text, &e))
}
