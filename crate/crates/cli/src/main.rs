//! `circleflow`: check, solve, lay out and inspect circle-pattern instances.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use circleflow::conditions::{attainability, check_c1, AttainabilityOptions, AttainabilityReport, TargetFailure};
use circleflow::curvature::{r_to_u, RadiusVector};
use circleflow::io::{parse_instance, parse_solution, write_solution, IoError, ProblemInstance, TargetMode};
use circleflow::layout::{develop, render_svg, EmbeddedPattern, SvgOptions};
use circleflow::solver::{
    fit_exponential_rate, integrate_flow, newton_solve, FlowSpec, Method, NewtonSpec, Normalization, SolveError,
    SolveReport,
};
use circleflow::Geometry;

const EXIT_USAGE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_NOT_ATTAINABLE: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;
const EXIT_LAYOUT: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "circleflow", version, about = "Circle patterns with prescribed angles and curvatures")]
struct Cli {
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Report (C1), target validity and attainability; exit 0 iff attainable.
    Check {
        instance: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Solve for radii and write a solution report; exit 0 iff converged.
    Solve {
        instance: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        solve: SolveArgs,
        /// Start from the radii of an earlier solution file.
        #[arg(long, value_name = "PATH")]
        initial: Option<PathBuf>,
        /// Solution output path (stdout when absent).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Develop a solution into circle centers and write an SVG.
    Layout {
        instance: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        solve: SolveArgs,
        /// Radii from a solution file; the instance is solved first when absent.
        #[arg(long, value_name = "PATH")]
        solution: Option<PathBuf>,
        /// Draw the triangulation over the circles.
        #[arg(long)]
        overlay: bool,
        /// SVG size in pixels.
        #[arg(long, default_value_t = 800.0)]
        size: f64,
        /// SVG output path (stdout when absent).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Fit the exponential decay rate of a stored residual history.
    Rate {
        solution: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Overrides {
    /// Background geometry, overriding the instance.
    #[arg(long, value_parser = ["euclidean", "hyperbolic"])]
    geometry: Option<String>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long, value_parser = ["flow", "newton"])]
    method: Option<String>,
    /// Convergence tolerance on the max-norm curvature residual.
    #[arg(long)]
    tol: Option<f64>,
    /// Flow steps or Newton iterations.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Largest flow time step.
    #[arg(long)]
    dt_max: Option<f64>,
    /// Solve even when the target fails the attainability check.
    #[arg(long)]
    force: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::new(EXIT_INVALID, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(f) = configure_threads() {
        eprintln!("error: {}", f.message);
        return ExitCode::from(f.code);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("CIRCLEFLOW_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::new(EXIT_USAGE, format!("CIRCLEFLOW_THREADS=`{value}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let verbose = cli.verbose;
    match cli.command {
        Command::Check { instance, overrides } => {
            let inst = load_instance(&instance, &overrides)?;
            let report = run_check(&inst)?;
            print!("{}", describe_check(&inst, &report));
            if check_passes(&inst, &report) {
                Ok(())
            } else {
                Err(Failure::new(EXIT_NOT_ATTAINABLE, ""))
            }
        }
        Command::Solve {
            instance,
            overrides,
            solve,
            initial,
            out,
        } => {
            let mut inst = load_instance(&instance, &overrides)?;
            if let Some(path) = initial {
                let sol = parse_solution(&read(&path)?)?;
                inst = inst.with_initial_radii(sol.radii)?;
            }
            let (report, check, solved) = solve_instance(&inst, &solve, verbose)?;
            let text = write_solution(&report, tolerance(&inst, &solve), Some(&check), None);
            emit(out.as_deref(), &text)?;
            if solved {
                Ok(())
            } else {
                Err(Failure::new(
                    EXIT_NOT_CONVERGED,
                    format!("no convergence ({:?}, residual {:.3e})", report.stop_reason, report.residual()),
                ))
            }
        }
        Command::Layout {
            instance,
            overrides,
            solve,
            solution,
            overlay,
            size,
            out,
        } => {
            let inst = load_instance(&instance, &overrides)?;
            let radii = match solution {
                Some(path) => {
                    let sol = parse_solution(&read(&path)?)?;
                    if sol.geometry != inst.geometry {
                        return Err(Failure::new(
                            EXIT_INVALID,
                            format!("solution is {} but the instance is {}", sol.geometry, inst.geometry),
                        ));
                    }
                    sol.radii
                }
                None => {
                    let (report, _, solved) = solve_instance(&inst, &solve, verbose)?;
                    if !solved {
                        return Err(Failure::new(
                            EXIT_NOT_CONVERGED,
                            format!("no convergence (residual {:.3e})", report.residual()),
                        ));
                    }
                    report.r
                }
            };
            if radii.len() != inst.surface.vertex_count() {
                return Err(Failure::new(
                    EXIT_INVALID,
                    format!(
                        "solution has {} radii but the surface has {} vertices",
                        radii.len(),
                        inst.surface.vertex_count()
                    ),
                ));
            }
            let r = RadiusVector::new(radii).map_err(|e| Failure::new(EXIT_INVALID, e.to_string()))?;
            let pattern = develop(&inst.surface, &inst.theta, &r, inst.geometry)
                .map_err(|e| Failure::new(EXIT_LAYOUT, e.to_string()))?;
            if verbose {
                describe_layout(&inst, &pattern);
            }
            let options = SvgOptions {
                overlay,
                size,
                ..SvgOptions::default()
            };
            emit(out.as_deref(), &render_svg(&pattern, &options))
        }
        Command::Rate { solution } => {
            let sol = parse_solution(&read(&solution)?)?;
            let fit = fit_exponential_rate(&sol.history.times, &sol.history.residuals)
                .map_err(|e| Failure::new(EXIT_INVALID, e.to_string()))?;
            println!("rate = {:.16e}", fit.rate);
            println!("r_squared = {:.16e}", fit.r_squared);
            println!("samples = {}", fit.samples);
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(EXIT_USAGE, format!("cannot read {}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Failure::new(EXIT_USAGE, format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_instance(path: &Path, overrides: &Overrides) -> Result<ProblemInstance, Failure> {
    let text = read(path)?;
    let inst = parse_instance(&text).map_err(|e| Failure::new(EXIT_INVALID, format!("{}: {e}", path.display())))?;
    match &overrides.geometry {
        Some(g) => {
            let g: Geometry = g.parse().map_err(|e: String| Failure::new(EXIT_USAGE, e))?;
            Ok(inst.with_geometry(g)?)
        }
        None => Ok(inst),
    }
}

fn run_check(inst: &ProblemInstance) -> Result<AttainabilityReport, Failure> {
    let options = AttainabilityOptions {
        full_report: true,
        ..AttainabilityOptions::default()
    };
    attainability(&inst.surface, &inst.theta, &inst.target, &options).map_err(|e| Failure::new(EXIT_INVALID, e.to_string()))
}

fn check_passes(inst: &ProblemInstance, report: &AttainabilityReport) -> bool {
    report.attainable && check_c1(&inst.surface, &inst.theta).is_empty()
}

fn describe_check(inst: &ProblemInstance, report: &AttainabilityReport) -> String {
    use std::fmt::Write as _;
    let s = &inst.surface;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "surface: |V| = {}, |E| = {}, |F| = {}, euler = {}, boundary components = {}",
        s.vertex_count(),
        s.edge_count(),
        s.triangle_count(),
        s.euler_characteristic(),
        s.boundary_component_count()
    );
    let _ = writeln!(out, "geometry: {}", inst.geometry);
    let _ = writeln!(out, "target: {}", inst.target_mode.name());

    let c1 = check_c1(&inst.surface, &inst.theta);
    if c1.is_empty() {
        let _ = writeln!(out, "C1: ok");
    } else {
        let _ = writeln!(out, "C1: {} triangle(s) violate", c1.len());
        for v in &c1 {
            let _ = writeln!(out, "  triangle {}: xi = [{:.17e}, {:.17e}, {:.17e}]", v.triangle, v.xi[0], v.xi[1], v.xi[2]);
        }
    }

    let t = &report.target;
    let relation = match inst.geometry {
        Geometry::Euclidean => "=",
        Geometry::Hyperbolic => ">",
    };
    let gb_ok = !t.failures.iter().any(|f| matches!(f, TargetFailure::GaussBonnet { .. }));
    let _ = writeln!(
        out,
        "gauss-bonnet: sum k = {:.17e}, 2 pi chi = {:.17e}, required {relation}: {}",
        t.sum,
        t.euler_term,
        if gb_ok { "ok" } else { "FAILED (subset A = V)" }
    );
    for f in &t.failures {
        if let TargetFailure::CurvatureBound { vertex, value, bound } = f {
            let _ = writeln!(out, "  vertex {vertex}: k = {value:.17e} is not below {bound:.17e}");
        }
    }

    let _ = writeln!(
        out,
        "subsets: {} checked ({}), {} violation(s)",
        report.subsets_checked,
        if report.exhaustive { "exhaustive" } else { "restricted" },
        report.violation_count
    );
    for v in report.violations.iter().take(20) {
        let _ = writeln!(
            out,
            "  A = {:?}: sum k = {:.17e}, bound = {:.17e}, slack = {:.3e}",
            v.subset, v.lhs, v.rhs, v.slack
        );
    }
    let shown = report.violations.len().min(20) as u64;
    if report.violation_count > shown {
        let _ = writeln!(out, "  ... {} more", report.violation_count - shown);
    }
    let verdict = if check_passes(inst, report) {
        "attainable"
    } else {
        "not attainable"
    };
    let _ = writeln!(out, "verdict: {verdict}");
    out
}

fn tolerance(inst: &ProblemInstance, args: &SolveArgs) -> f64 {
    args.tol.unwrap_or(inst.solver.tol)
}

/// Returns the final report, the attainability check and whether it converged.
fn solve_instance(
    inst: &ProblemInstance,
    args: &SolveArgs,
    verbose: bool,
) -> Result<(SolveReport, AttainabilityReport, bool), Failure> {
    if let Some(tol) = args.tol {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Failure::new(EXIT_USAGE, format!("--tol {tol} is not positive")));
        }
    }
    if let Some(dt) = args.dt_max {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Failure::new(EXIT_USAGE, format!("--dt-max {dt} is not positive")));
        }
    }
    if args.max_steps == Some(0) {
        return Err(Failure::new(EXIT_USAGE, "--max-steps must be positive"));
    }
    let check = run_check(inst)?;
    if !check_passes(inst, &check) {
        if !args.force {
            eprint!("{}", describe_check(inst, &check));
            return Err(Failure::new(
                EXIT_NOT_ATTAINABLE,
                "target is not attainable; pass --force to solve anyway",
            ));
        }
        if verbose {
            eprintln!("warning: target is not attainable; solving anyway");
        }
    }
    let method = match &args.method {
        Some(m) => m.parse::<Method>().map_err(|e| Failure::new(EXIT_USAGE, e))?,
        None => inst.solver.method,
    };
    let tol = tolerance(inst, args);
    let max_steps = args.max_steps.or(inst.solver.max_steps);
    if verbose {
        eprintln!(
            "solving {} vertices with {} (tol {tol:.1e})",
            inst.surface.vertex_count(),
            method.name()
        );
    }
    let result = match method {
        Method::Flow => {
            let mut spec = FlowSpec::new(inst.target.clone());
            if inst.target_mode == TargetMode::Mean {
                spec.normalization = Normalization::Mean;
            }
            spec.tol = tol;
            if let Some(m) = max_steps {
                spec.max_steps = m;
            }
            if let Some(dt) = args.dt_max.or(inst.solver.dt_max) {
                spec.step.dt_max = dt;
                spec.step.dt0 = spec.step.dt0.min(dt);
            }
            integrate_flow(&inst.surface, &inst.theta, &inst.initial_radii, &spec)
        }
        Method::Newton => {
            let mut spec = NewtonSpec {
                tol,
                ..NewtonSpec::default()
            };
            if let Some(m) = max_steps {
                spec.max_iterations = m;
            }
            let u0 = r_to_u(&inst.initial_radii, inst.geometry);
            newton_solve(&inst.surface, &inst.theta, &u0, &inst.target, &spec)
        }
    };
    match result {
        Ok(report) => {
            if verbose {
                eprintln!(
                    "converged after {} iterations, residual {:.3e}",
                    report.iterations,
                    report.residual()
                );
            }
            Ok((report, check, true))
        }
        Err(e) => match e {
            SolveError::MaxStepsExceeded(r) | SolveError::LineSearchFailed(r) | SolveError::Diverged(r) => {
                Ok((*r, check, false))
            }
            other => Err(Failure::new(EXIT_NOT_CONVERGED, other.to_string())),
        },
    }
}

fn describe_layout(inst: &ProblemInstance, pattern: &EmbeddedPattern) {
    let checks = pattern.edge_checks(&inst.surface, &inst.theta);
    let worst_length = checks
        .iter()
        .map(|c| (c.distance - c.expected_length).abs())
        .fold(0.0, f64::max);
    let worst_angle = checks
        .iter()
        .filter_map(|c| c.angle.map(|a| (a - c.theta).abs()))
        .fold(0.0, f64::max);
    eprintln!(
        "layout: closure error {:.3e}, worst edge length error {worst_length:.3e}, worst angle error {worst_angle:.3e}, {} overlapping triangle pair(s)",
        pattern.closure_error,
        pattern.overlaps.len()
    );
}
