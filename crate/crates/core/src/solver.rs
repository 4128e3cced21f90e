//! Radius vectors realizing a curvature target, by combinatorial Ricci flow
//! (explicit Euler in `u`) or by damped Newton on the convex energy
//! `Φ(u) = ∫ Σ (K_i - k_i) du_i`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::circlegeom::Geometry;
use crate::conditions::{mean_curvature, CurvatureTarget};
use crate::curvature::{
    curvature_and_jacobian, curvature_map, r_to_u, u_to_r, AngleAssignment, CurvatureError, RadiusVector,
    UCoordinates,
};
use crate::mesh::TriangulatedSurface;

/// 8-point Gauss-Legendre nodes on `[-1, 1]` (positive half) and weights.
const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Flow,
    Newton,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Flow => "flow",
            Method::Newton => "newton",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "flow" => Ok(Method::Flow),
            "newton" => Ok(Method::Newton),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    None,
    /// Replace the target by `K_av = 2πχ/|V|` at every vertex.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub dt0: f64,
    pub dt_max: f64,
    /// The flow gives up once `dt` falls below this.
    pub dt_min: f64,
    pub shrink: f64,
    pub grow: f64,
    /// Consecutive accepted steps before `dt` grows.
    pub grow_after: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            dt0: 0.1,
            dt_max: 1.0,
            dt_min: 1e-14,
            shrink: 0.5,
            grow: 1.2,
            grow_after: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StallControl {
    /// Accepted steps per comparison window.
    pub window: usize,
    /// Required relative decrease of the best residual per window.
    pub min_improvement: f64,
}

impl Default for StallControl {
    fn default() -> Self {
        Self {
            window: 10_000,
            min_improvement: 1e-3,
        }
    }
}

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
/// Relative growth of the squared residual still attributed to roundoff when
/// accepting a flow step.
const ROUNDOFF_SLACK: f64 = 1e-12;
pub const DEFAULT_FLOW_STEPS: usize = 100_000;
pub const DEFAULT_NEWTON_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub target: CurvatureTarget,
    pub normalization: Normalization,
    pub step: StepControl,
    pub stall: StallControl,
    /// Stop when `‖K - k‖_∞` is at most this.
    pub tol: f64,
    /// Maximum accepted steps.
    pub max_steps: usize,
    /// Record `Φ` along the trajectory (eight extra curvature evaluations per step).
    pub track_energy: bool,
}

impl FlowSpec {
    pub fn new(target: CurvatureTarget) -> Self {
        Self {
            target,
            normalization: Normalization::None,
            step: StepControl::default(),
            stall: StallControl::default(),
            tol: DEFAULT_TOLERANCE,
            max_steps: DEFAULT_FLOW_STEPS,
            track_energy: false,
        }
    }

    /// Mean-curvature normalized flow.
    pub fn normalized(surface: &TriangulatedSurface, geometry: Geometry) -> Self {
        Self {
            normalization: Normalization::Mean,
            ..Self::new(CurvatureTarget::mean(surface, geometry))
        }
    }

    pub fn geometry(&self) -> Geometry {
        self.target.geometry()
    }

    /// The per-vertex target the flow drives toward.
    pub fn effective_target(&self, surface: &TriangulatedSurface) -> Vec<f64> {
        match self.normalization {
            Normalization::None => self.target.k().to_vec(),
            Normalization::Mean => vec![mean_curvature(surface); surface.vertex_count()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSpec {
    pub tol: f64,
    pub max_iterations: usize,
    /// Sufficient-decrease factor on `Φ`.
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Extra full steps after reaching `tol`, kept only if they lower the residual.
    pub polish_steps: usize,
}

impl Default for NewtonSpec {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_NEWTON_ITERATIONS,
            armijo: 1e-4,
            max_backtracks: 40,
            polish_steps: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxSteps,
    /// The residual stopped improving.
    Stalled,
    /// The flow step size collapsed below its minimum.
    StepUnderflow,
    LineSearch,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Decay rate `c` in `residual ≈ C e^{-ct}`.
    pub rate: f64,
    pub r_squared: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub method: Method,
    pub geometry: Geometry,
    pub stop_reason: StopReason,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    /// Final curvatures.
    pub curvature: Vec<f64>,
    pub target: Vec<f64>,
    /// Accepted flow steps or Newton iterations.
    pub iterations: usize,
    pub rejected_steps: usize,
    /// `‖K - k‖_∞` after each accepted step, starting with the initial value.
    pub residual_history: Vec<f64>,
    /// Flow time (or iteration index for Newton) for each history entry.
    pub times: Vec<f64>,
    /// `Φ - Φ(u_0)` for each history entry, when tracked.
    pub energy_history: Option<Vec<f64>>,
    pub fitted_rate: Option<RateFit>,
    /// `|Σu - Σu_0|`.
    pub sum_u_drift: f64,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.stop_reason == StopReason::Converged
    }

    pub fn residual(&self) -> f64 {
        max_abs_diff(&self.curvature, &self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("no convergence after {} steps (residual {:.3e}, {:?})", .0.iterations, .0.residual(), .0.stop_reason)]
    MaxStepsExceeded(Box<SolveReport>),
    #[error("line search failed at iteration {} (residual {:.3e})", .0.iterations, .0.residual())]
    LineSearchFailed(Box<SolveReport>),
    #[error("Newton iteration diverged after {} iterations (residual {:.3e})", .0.iterations, .0.residual())]
    Diverged(Box<SolveReport>),
    #[error("Hessian is not positive definite at iteration {iteration}")]
    SingularHessian { iteration: usize },
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
    #[error("rate fit needs at least {needed} tail samples of a converged run, found {found}")]
    InsufficientHistory { needed: usize, found: usize },
    #[error("target is {target} but the coordinates are {coordinates}")]
    GeometryMismatch { target: Geometry, coordinates: Geometry },
}

impl SolveError {
    /// The partial report carried by non-convergence errors.
    pub fn report(&self) -> Option<&SolveReport> {
        match self {
            SolveError::MaxStepsExceeded(r) | SolveError::LineSearchFailed(r) | SolveError::Diverged(r) => Some(r),
            _ => None,
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn curvatures_at(
    surface: &TriangulatedSurface,
    theta: &AngleAssignment,
    u: &UCoordinates,
) -> Result<Vec<f64>, CurvatureError> {
    let r = u_to_r(u)?;
    Ok(curvature_map(surface, theta, &r, u.geometry())?.k)
}

/// `k_i - K_i(u)`: the right-hand side of the flow in `u`.
pub fn flow_rhs(
    surface: &TriangulatedSurface,
    theta: &AngleAssignment,
    u: &UCoordinates,
    k: &[f64],
) -> Result<Vec<f64>, CurvatureError> {
    let big_k = curvatures_at(surface, theta, u)?;
    Ok(k.iter().zip(&big_k).map(|(a, b)| a - b).collect())
}

/// `Φ(to) - Φ(from)` by 8-point Gauss-Legendre quadrature of `ω` on the segment.
pub fn energy_difference(
    surface: &TriangulatedSurface,
    theta: &AngleAssignment,
    k: &[f64],
    from: &UCoordinates,
    to: &UCoordinates,
) -> Result<f64, CurvatureError> {
    let geometry = from.geometry();
    let a = from.as_slice();
    let delta: Vec<f64> = to.as_slice().iter().zip(a).map(|(y, x)| y - x).collect();
    let mut total = 0.0;
    for (node, weight) in GL_NODES.iter().zip(GL_WEIGHTS) {
        for s in [0.5 * (1.0 - node), 0.5 * (1.0 + node)] {
            let p: Vec<f64> = a.iter().zip(&delta).map(|(x, d)| x + s * d).collect();
            let big_k = curvatures_at(surface, theta, &UCoordinates::new(p, geometry)?)?;
            let integrand: f64 = big_k
                .iter()
                .zip(k)
                .zip(&delta)
                .map(|((kk, t), d)| (kk - t) * d)
                .sum();
            total += 0.5 * weight * integrand;
        }
    }
    Ok(total)
}

/// `Φ` accumulated along a piecewise-linear path through `points`.
pub fn energy_along_path(
    surface: &TriangulatedSurface,
    theta: &AngleAssignment,
    k: &[f64],
    points: &[UCoordinates],
) -> Result<f64, CurvatureError> {
    points
        .windows(2)
        .map(|w| energy_difference(surface, theta, k, &w[0], &w[1]))
        .sum()
}

/// Least-squares fit of `ln residual` against time over the last half of a
/// history.
pub fn fit_exponential_rate(times: &[f64], residuals: &[f64]) -> Result<RateFit, SolveError> {
    const NEEDED: usize = 20;
    let n = times.len().min(residuals.len());
    let start = n / 2;
    let pts: Vec<(f64, f64)> = (start..n)
        .filter(|&i| residuals[i] > 0.0 && residuals[i].is_finite())
        .map(|i| (times[i], residuals[i].ln()))
        .collect();
    if pts.len() < NEEDED {
        return Err(SolveError::InsufficientHistory {
            needed: NEEDED,
            found: pts.len(),
        });
    }
    let m = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if stt == 0.0 {
        return Err(SolveError::InsufficientHistory {
            needed: NEEDED,
            found: 0,
        });
    }
    let slope = sty / stt;
    let r_squared = if syy == 0.0 { 1.0 } else { sty * sty / (stt * syy) };
    Ok(RateFit {
        rate: -slope,
        r_squared,
        samples: pts.len(),
    })
}

/// Exponential decay rate of a converged run's residual.
pub fn fit_rate(report: &SolveReport) -> Result<RateFit, SolveError> {
    if !report.converged() {
        return Err(SolveError::InsufficientHistory { needed: 20, found: 0 });
    }
    fit_exponential_rate(&report.times, &report.residual_history)
}

struct Trajectory {
    residuals: Vec<f64>,
    times: Vec<f64>,
    energy: Option<Vec<f64>>,
}

#[allow(clippy::too_many_arguments)]
fn finish(
    method: Method,
    stop_reason: StopReason,
    u: &UCoordinates,
    big_k: Vec<f64>,
    target: Vec<f64>,
    iterations: usize,
    rejected_steps: usize,
    trajectory: Trajectory,
    sum_u0: f64,
) -> Result<SolveReport, SolveError> {
    let r = u_to_r(u)?.into_vec();
    let mut report = SolveReport {
        method,
        geometry: u.geometry(),
        stop_reason,
        r,
        u: u.as_slice().to_vec(),
        curvature: big_k,
        target,
        iterations,
        rejected_steps,
        residual_history: trajectory.residuals,
        times: trajectory.times,
        energy_history: trajectory.energy,
        fitted_rate: None,
        sum_u_drift: (u.as_slice().iter().sum::<f64>() - sum_u0).abs(),
    };
    report.fitted_rate = fit_rate(&report).ok();
    match stop_reason {
        StopReason::Converged => Ok(report),
        StopReason::MaxSteps | StopReason::Stalled | StopReason::StepUnderflow => {
            Err(SolveError::MaxStepsExceeded(Box::new(report)))
        }
        StopReason::LineSearch => Err(SolveError::LineSearchFailed(Box::new(report))),
        StopReason::Diverged => Err(SolveError::Diverged(Box::new(report))),
    }
}

/// Integrate `du/dt = k - K(u)` with explicit Euler steps.
///
/// A step is accepted when it stays in the domain and does not increase
/// `‖K - k‖_2` beyond roundoff (the norm decreases monotonically along the
/// exact flow); otherwise `dt` is halved.
pub fn integrate_flow(
    surface: &TriangulatedSurface,
    theta: &AngleAssignment,
    r0: &RadiusVector,
    spec: &FlowSpec,
) -> Result<SolveReport, SolveError> {
    let geometry = spec.geometry();
    let k = spec.effective_target(surface);
    if r0.len() != surface.vertex_count() {
        return Err(CurvatureError::LengthMismatch {
            expected: surface.vertex_count(),
            found: r0.len(),
        }
        .into());
    }
    let mut u = r_to_u(r0, geometry);
    let sum_u0: f64 = u.as_slice().iter().sum();
    let mut big_k = curvatures_at(surface, theta, &u)?;
    let mut g: Vec<f64> = k.iter().zip(&big_k).map(|(a, b)| a - b).collect();
    let mut res2 = norm_sq(&g);
    let mut res_inf = max_abs_diff(&big_k, &k);

    let mut traj = Trajectory {
        residuals: vec![res_inf],
        times: vec![0.0],
        energy: spec.track_energy.then(|| vec![0.0]),
    };
    let mut t = 0.0;
    let mut phi = 0.0;
    let mut dt = spec.step.dt0;
    let mut streak = 0;
    let mut steps = 0;
    let mut rejected = 0;
    let mut window_best = res_inf;
    let mut best = res_inf;

    let stop = loop {
        if res_inf <= spec.tol {
            break StopReason::Converged;
        }
        if steps >= spec.max_steps {
            break StopReason::MaxSteps;
        }
        if dt < spec.step.dt_min {
            break StopReason::StepUnderflow;
        }
        let trial: Vec<f64> = u.as_slice().iter().zip(&g).map(|(x, d)| x + dt * d).collect();
        let candidate = UCoordinates::new(trial, geometry)
            .ok()
            .and_then(|c| curvatures_at(surface, theta, &c).ok().map(|kk| (c, kk)));
        let accepted = candidate.and_then(|(c, kk)| {
            let g_new: Vec<f64> = k.iter().zip(&kk).map(|(a, b)| a - b).collect();
            let r2 = norm_sq(&g_new);
            (r2 <= res2 * (1.0 + ROUNDOFF_SLACK)).then_some((c, kk, g_new, r2))
        });
        let Some((c, kk, g_new, r2)) = accepted else {
            rejected += 1;
            streak = 0;
            dt *= spec.step.shrink;
            continue;
        };
        if let Some(e) = traj.energy.as_mut() {
            phi += energy_difference(surface, theta, &k, &u, &c)?;
            e.push(phi);
        }
        u = c;
        big_k = kk;
        g = g_new;
        res2 = r2;
        res_inf = max_abs_diff(&big_k, &k);
        t += dt;
        steps += 1;
        traj.residuals.push(res_inf);
        traj.times.push(t);

        streak += 1;
        if streak >= spec.step.grow_after {
            dt = (dt * spec.step.grow).min(spec.step.dt_max);
            streak = 0;
        }
        best = best.min(res_inf);
        if spec.stall.window > 0 && steps % spec.stall.window == 0 {
            if best > (1.0 - spec.stall.min_improvement) * window_best {
                break StopReason::Stalled;
            }
            window_best = best;
        }
    };
    finish(Method::Flow, stop, &u, big_k, k, steps, rejected, traj, sum_u0)
}

/// Damped Newton iteration on `Φ` with the curvature Jacobian as Hessian.
///
/// Euclidean steps are confined to the hyperplane `Σu = Σu_0`, where the
/// Hessian is positive definite. Hyperbolic steps are shortened to stay inside
/// `u < 0`.
pub fn newton_solve(
    surface: &TriangulatedSurface,
    theta: &AngleAssignment,
    u0: &UCoordinates,
    target: &CurvatureTarget,
    spec: &NewtonSpec,
) -> Result<SolveReport, SolveError> {
    let geometry = u0.geometry();
    if target.geometry() != geometry {
        return Err(SolveError::GeometryMismatch {
            target: target.geometry(),
            coordinates: geometry,
        });
    }
    let n = surface.vertex_count();
    if u0.len() != n {
        return Err(CurvatureError::LengthMismatch {
            expected: n,
            found: u0.len(),
        }
        .into());
    }
    let k = target.k().to_vec();
    let sum_u0: f64 = u0.as_slice().iter().sum();
    let mut u = u0.clone();
    let (curv, mut jac) = curvature_and_jacobian(surface, theta, &u)?;
    let mut big_k = curv.k;
    let mut res_inf = max_abs_diff(&big_k, &k);
    let mut traj = Trajectory {
        residuals: vec![res_inf],
        times: vec![0.0],
        energy: Some(vec![0.0]),
    };
    let mut phi = 0.0;
    let mut iterations = 0;
    let mut polished = 0;

    let stop = loop {
        if res_inf <= spec.tol {
            if polished >= spec.polish_steps || iterations == 0 {
                break StopReason::Converged;
            }
            polished += 1;
            // A full step from here usually lands at roundoff level.
            let Ok(delta) = newton_direction(&jac, &big_k, &k, geometry, iterations) else {
                break StopReason::Converged;
            };
            let trial: Vec<f64> = u.as_slice().iter().zip(&delta).map(|(x, d)| x + d).collect();
            match UCoordinates::new(trial, geometry)
                .ok()
                .and_then(|c| curvature_and_jacobian(surface, theta, &c).ok().map(|kj| (c, kj)))
            {
                Some((c, (curv, j))) if max_abs_diff(&curv.k, &k) < res_inf => {
                    u = c;
                    big_k = curv.k;
                    jac = j;
                    res_inf = max_abs_diff(&big_k, &k);
                }
                _ => break StopReason::Converged,
            }
            continue;
        }
        if iterations >= spec.max_iterations {
            break StopReason::Diverged;
        }
        let g: Vec<f64> = big_k.iter().zip(&k).map(|(a, b)| a - b).collect();
        let newton = newton_direction(&jac, &big_k, &k, geometry, iterations)?;
        let mut step = line_search(surface, theta, &k, &u, &g, &newton, res_inf, spec)?;
        if step.is_none() {
            // Fall back to a flow step along the negative gradient.
            let flow: Vec<f64> = projected_gradient(&g, geometry).iter().map(|x| -x).collect();
            step = line_search(surface, theta, &k, &u, &g, &flow, res_inf, spec)?;
        }
        let Some((c, d_phi)) = step else {
            break StopReason::LineSearch;
        };
        iterations += 1;
        phi += d_phi;
        let (curv, j) = curvature_and_jacobian(surface, theta, &c)?;
        u = c;
        big_k = curv.k;
        jac = j;
        res_inf = max_abs_diff(&big_k, &k);
        traj.residuals.push(res_inf);
        traj.times.push(iterations as f64);
        if let Some(e) = traj.energy.as_mut() {
            e.push(phi);
        }
    };
    finish(Method::Newton, stop, &u, big_k, k, iterations, 0, traj, sum_u0)
}

fn projected_gradient(g: &[f64], geometry: Geometry) -> Vec<f64> {
    match geometry {
        Geometry::Hyperbolic => g.to_vec(),
        Geometry::Euclidean => {
            let mean = g.iter().sum::<f64>() / g.len() as f64;
            g.iter().map(|x| x - mean).collect()
        }
    }
}

/// Solve `H δ = -g`; Euclidean uses `H + 11ᵀ/n`, which is positive definite
/// and keeps `Σδ = 0` for gradients orthogonal to the constants.
fn newton_direction(
    jac: &crate::curvature::Jacobian,
    big_k: &[f64],
    k: &[f64],
    geometry: Geometry,
    iteration: usize,
) -> Result<Vec<f64>, SolveError> {
    let n = big_k.len();
    let g: Vec<f64> = big_k.iter().zip(k).map(|(a, b)| a - b).collect();
    let g = projected_gradient(&g, geometry);
    let mut h: DMatrix<f64> = jac.to_dense();
    if geometry == Geometry::Euclidean {
        h.add_scalar_mut(1.0 / n as f64);
    }
    let chol = h.cholesky().ok_or(SolveError::SingularHessian { iteration })?;
    let delta = chol.solve(&-DVector::from_vec(g));
    Ok(delta.iter().copied().collect())
}

/// Backtracking from the largest admissible step. Accepts on Armijo decrease
/// of `Φ`, or on a halving of the residual once `Φ` differences approach
/// roundoff. Returns the new point and `ΔΦ`.
#[allow(clippy::too_many_arguments)]
fn line_search(
    surface: &TriangulatedSurface,
    theta: &AngleAssignment,
    k: &[f64],
    u: &UCoordinates,
    g: &[f64],
    direction: &[f64],
    res_inf: f64,
    spec: &NewtonSpec,
) -> Result<Option<(UCoordinates, f64)>, SolveError> {
    let geometry = u.geometry();
    let slope = dot(g, direction);
    if slope.is_nan() || slope >= 0.0 {
        return Ok(None);
    }
    let mut alpha: f64 = 1.0;
    if geometry == Geometry::Hyperbolic {
        for (x, d) in u.as_slice().iter().zip(direction) {
            if *d > 0.0 {
                alpha = alpha.min(0.95 * -x / d);
            }
        }
    }
    for _ in 0..spec.max_backtracks {
        let trial: Vec<f64> = u.as_slice().iter().zip(direction).map(|(x, d)| x + alpha * d).collect();
        if let Ok(c) = UCoordinates::new(trial, geometry) {
            if let Ok(kk) = curvatures_at(surface, theta, &c) {
                let new_res = max_abs_diff(&kk, k);
                if let Ok(d_phi) = energy_difference(surface, theta, k, u, &c) {
                    if d_phi <= spec.armijo * alpha * slope || new_res <= 0.5 * res_inf {
                        return Ok(Some((c, d_phi)));
                    }
                }
            }
        }
        alpha *= 0.5;
    }
    Ok(None)
}

/// `u` for radii all equal to one.
pub fn default_initial_u(surface: &TriangulatedSurface, geometry: Geometry) -> UCoordinates {
    r_to_u(
        &RadiusVector::uniform(surface.vertex_count(), 1.0).expect("unit radii are valid"),
        geometry,
    )
}
