//! Combinatorial pre-checks: the per-triangle angle condition (C1), validity
//! of a curvature target, and attainability by subset enumeration.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use thiserror::Error;

use crate::circlegeom::{xi_values, Geometry, XI_TOLERANCE};
use crate::curvature::AngleAssignment;
use crate::mesh::{MeshError, TriangulatedSurface};

/// Default vertex-count limit for exhaustive subset enumeration.
pub const ENUMERATION_CUTOFF: usize = 24;

/// Slack band for the strict subset inequalities.
pub const SLACK_TOLERANCE: f64 = 1e-9;

/// Relative tolerance (per vertex) of the Euclidean Gauss-Bonnet equality.
pub const GAUSS_BONNET_EQUALITY_TOLERANCE: f64 = 1e-12;

/// Violations kept in a full report; the total is still counted.
pub const DEFAULT_MAX_RECORDED: usize = 1000;

const CHUNK_BITS: u32 = 14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConditionsError {
    #[error("exhaustive enumeration over {vertices} vertices exceeds the cutoff of {cutoff}")]
    EnumerationTooLarge { vertices: usize, cutoff: usize },
    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("vertex {vertex} is not a boundary vertex")]
    NotBoundaryVertex { vertex: usize },
    #[error("boundary turning value {value} at vertex {vertex} is outside [0, pi)")]
    PhiOutOfRange { vertex: usize, value: f64 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C1Violation {
    pub triangle: usize,
    pub xi: [f64; 3],
}

/// Triangles on which `ξ_a = I_a + I_b I_c` is negative for some corner.
pub fn check_c1(surface: &TriangulatedSurface, theta: &AngleAssignment) -> Vec<C1Violation> {
    (0..surface.triangle_count())
        .filter_map(|t| {
            let xi = xi_values(&theta.triangle_thetas(surface, t).map(f64::cos));
            xi.iter()
                .any(|&x| x < -XI_TOLERANCE)
                .then_some(C1Violation { triangle: t, xi })
        })
        .collect()
}

/// Prescribed curvature per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureTarget {
    k: Vec<f64>,
    geometry: Geometry,
    phi: Option<Vec<f64>>,
}

impl CurvatureTarget {
    pub fn zero(surface: &TriangulatedSurface, geometry: Geometry) -> Self {
        Self {
            k: vec![0.0; surface.vertex_count()],
            geometry,
            phi: None,
        }
    }

    /// `k_i = 2πχ/|V|` everywhere.
    pub fn mean(surface: &TriangulatedSurface, geometry: Geometry) -> Self {
        let kav = mean_curvature(surface);
        Self {
            k: vec![kav; surface.vertex_count()],
            geometry,
            phi: None,
        }
    }

    pub fn explicit(surface: &TriangulatedSurface, geometry: Geometry, k: Vec<f64>) -> Result<Self, ConditionsError> {
        if k.len() != surface.vertex_count() {
            return Err(ConditionsError::LengthMismatch {
                expected: surface.vertex_count(),
                found: k.len(),
            });
        }
        Ok(Self { k, geometry, phi: None })
    }

    /// Zero curvature inside and `φ(v)` at boundary vertices. Boundary vertices
    /// missing from `phi` get `φ = 0`.
    pub fn boundary_phi(
        surface: &TriangulatedSurface,
        geometry: Geometry,
        phi: &[(usize, f64)],
    ) -> Result<Self, ConditionsError> {
        let mut full = vec![0.0; surface.vertex_count()];
        for &(vertex, value) in phi {
            if vertex >= surface.vertex_count() || !surface.is_boundary_vertex(vertex) {
                return Err(ConditionsError::NotBoundaryVertex { vertex });
            }
            if !(0.0..PI).contains(&value) {
                return Err(ConditionsError::PhiOutOfRange { vertex, value });
            }
            full[vertex] = value;
        }
        Ok(Self {
            k: full.clone(),
            geometry,
            phi: Some(full),
        })
    }

    pub fn k(&self) -> &[f64] {
        &self.k
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    /// The boundary turning values when built by [`CurvatureTarget::boundary_phi`].
    pub fn phi(&self) -> Option<&[f64]> {
        self.phi.as_deref()
    }
}

/// `2πχ(S)/|V|`.
pub fn mean_curvature(surface: &TriangulatedSurface) -> f64 {
    2.0 * PI * surface.euler_characteristic() as f64 / surface.vertex_count() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetFailure {
    /// `k_v ≥ 2π` at an interior vertex or `k_v ≥ π` at a boundary vertex.
    CurvatureBound { vertex: usize, value: f64, bound: f64 },
    /// Euclidean: `Σk ≠ 2πχ`; hyperbolic: `Σk ≤ 2πχ`.
    GaussBonnet { sum: f64, euler_term: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetCheck {
    pub failures: Vec<TargetFailure>,
    pub sum: f64,
    pub euler_term: f64,
}

impl TargetCheck {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn check_target(surface: &TriangulatedSurface, target: &CurvatureTarget) -> TargetCheck {
    let mut failures = Vec::new();
    for (vertex, &value) in target.k.iter().enumerate() {
        let bound = if surface.is_boundary_vertex(vertex) { PI } else { 2.0 * PI };
        if value.is_nan() || value >= bound {
            failures.push(TargetFailure::CurvatureBound { vertex, value, bound });
        }
    }
    let sum: f64 = target.k.iter().sum();
    let euler_term = 2.0 * PI * surface.euler_characteristic() as f64;
    let gb_ok = match target.geometry {
        Geometry::Euclidean => {
            (sum - euler_term).abs() <= GAUSS_BONNET_EQUALITY_TOLERANCE * surface.vertex_count() as f64
        }
        Geometry::Hyperbolic => sum - euler_term > SLACK_TOLERANCE,
    };
    if !gb_ok {
        failures.push(TargetFailure::GaussBonnet { sum, euler_term });
    }
    TargetCheck {
        failures,
        sum,
        euler_term,
    }
}

/// Both sides of the subset inequality `Σ_A k > rhs(A)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSlack {
    pub subset: Vec<usize>,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

impl SubsetSlack {
    /// `|slack|` within the tolerance band.
    pub fn is_borderline(&self) -> bool {
        self.slack.abs() <= SLACK_TOLERANCE
    }

    pub fn passes(&self) -> bool {
        self.slack > SLACK_TOLERANCE
    }
}

/// Evaluate the subset inequality for `A` from the star-complex Euler
/// characteristics: `rhs = -Σ_{Lk(A)} (π - Θ) + 2πχ(G(A) \ ∂S) + πχ(G(A) ∩ ∂S)`.
pub fn subset_slack(
    surface: &TriangulatedSurface,
    theta: &AngleAssignment,
    target: &CurvatureTarget,
    subset: &[usize],
) -> Result<SubsetSlack, ConditionsError> {
    let analysis = surface.analyze_subset(subset)?;
    let lhs: f64 = analysis.subset.iter().map(|&v| target.k[v]).sum();
    let link: f64 = analysis
        .link_pairs
        .iter()
        .map(|&(e, _)| PI - theta.get(e))
        .sum();
    let rhs = -link + 2.0 * PI * analysis.chi_open as f64 + PI * analysis.chi_boundary as f64;
    Ok(SubsetSlack {
        subset: analysis.subset,
        lhs,
        rhs,
        slack: lhs - rhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnumerationMode {
    /// Exhaustive up to the cutoff, restricted beyond it.
    Auto,
    /// Exhaustive regardless of size, erroring past the cutoff.
    Exhaustive,
    Restricted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttainabilityOptions {
    pub mode: EnumerationMode,
    pub cutoff: usize,
    /// Keep enumerating after the first violation.
    pub full_report: bool,
    pub max_recorded: usize,
}

impl Default for AttainabilityOptions {
    fn default() -> Self {
        Self {
            mode: EnumerationMode::Auto,
            cutoff: ENUMERATION_CUTOFF,
            full_report: false,
            max_recorded: DEFAULT_MAX_RECORDED,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttainabilityReport {
    pub attainable: bool,
    /// Every proper non-empty subset was examined.
    pub exhaustive: bool,
    /// Subset violations (slack ≤ tolerance), in increasing bitmask order for
    /// exhaustive mode. Truncated to `max_recorded`.
    pub violations: Vec<SubsetSlack>,
    /// Number of violating subsets found; equals `violations.len()` unless
    /// truncated or stopped early.
    pub violation_count: u64,
    /// Whether enumeration stopped at the first violation.
    pub stopped_early: bool,
    pub subsets_checked: u64,
    pub target: TargetCheck,
}

/// Check the subset inequality for every proper non-empty `A ⊂ V` together
/// with the target's own bounds and Gauss-Bonnet clause.
pub fn attainability(
    surface: &TriangulatedSurface,
    theta: &AngleAssignment,
    target: &CurvatureTarget,
    options: &AttainabilityOptions,
) -> Result<AttainabilityReport, ConditionsError> {
    let n = surface.vertex_count();
    if target.k.len() != n {
        return Err(ConditionsError::LengthMismatch {
            expected: n,
            found: target.k.len(),
        });
    }
    if theta.values().len() != surface.edge_count() {
        return Err(ConditionsError::LengthMismatch {
            expected: surface.edge_count(),
            found: theta.values().len(),
        });
    }
    let target_check = check_target(surface, target);
    let exhaustive = match options.mode {
        EnumerationMode::Auto => n <= options.cutoff,
        EnumerationMode::Exhaustive => {
            if n > options.cutoff || n > 63 {
                return Err(ConditionsError::EnumerationTooLarge {
                    vertices: n,
                    cutoff: options.cutoff.min(63),
                });
            }
            true
        }
        EnumerationMode::Restricted => false,
    };
    let (violations, violation_count, subsets_checked, stopped_early) = if exhaustive {
        enumerate_exhaustive(surface, theta, target, options)
    } else {
        enumerate_restricted(surface, theta, target, options)?
    };
    Ok(AttainabilityReport {
        attainable: violation_count == 0 && target_check.ok(),
        exhaustive,
        violations,
        violation_count,
        stopped_early,
        subsets_checked,
        target: target_check,
    })
}

struct MaskTriangle {
    mask: u64,
    vertices: [usize; 3],
    thetas: [f64; 3],
}

fn mask_slack(
    mask: u64,
    tris: &[MaskTriangle],
    k: &[f64],
    boundary_mask: u64,
) -> (f64, f64) {
    let mut lhs = 0.0;
    let mut bits = mask;
    while bits != 0 {
        let v = bits.trailing_zeros() as usize;
        lhs += k[v];
        bits &= bits - 1;
    }
    // rhs = Σ_{Lk(A)} Θ + π (2|A| - |F(A)| - |A ∩ V_∂|), equivalent to the
    // Euler-characteristic form by the counting identity for G(A).
    let mut link_theta = 0.0;
    let mut star = 0i64;
    for t in tris {
        let inside = (t.mask & mask).count_ones();
        if inside == 0 {
            continue;
        }
        star += 1;
        if inside == 1 {
            let local = t.vertices.iter().position(|&v| mask >> v & 1 == 1).unwrap();
            link_theta += t.thetas[local];
        }
    }
    let count = 2 * mask.count_ones() as i64 - star - (mask & boundary_mask).count_ones() as i64;
    let rhs = link_theta + PI * count as f64;
    (lhs, rhs)
}

fn mask_to_subset(mask: u64) -> Vec<usize> {
    (0..64).filter(|&v| mask >> v & 1 == 1).collect()
}

type Enumeration = (Vec<SubsetSlack>, u64, u64, bool);

fn enumerate_exhaustive(
    surface: &TriangulatedSurface,
    theta: &AngleAssignment,
    target: &CurvatureTarget,
    options: &AttainabilityOptions,
) -> Enumeration {
    let n = surface.vertex_count();
    let tris: Vec<MaskTriangle> = (0..surface.triangle_count())
        .map(|t| {
            let vertices = surface.triangles()[t];
            MaskTriangle {
                mask: vertices.iter().fold(0, |m, &v| m | 1u64 << v),
                vertices,
                thetas: theta.triangle_thetas(surface, t),
            }
        })
        .collect();
    let boundary_mask = (0..n)
        .filter(|&v| surface.is_boundary_vertex(v))
        .fold(0u64, |m, v| m | 1 << v);
    let full: u64 = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let chunk = 1u64 << CHUNK_BITS;
    let chunks = full.div_ceil(chunk);
    // Lowest chunk index holding a violation; higher chunks may be skipped.
    let first_bad = AtomicUsize::new(usize::MAX);
    let k = target.k.as_slice();

    let per_chunk: Vec<(Vec<SubsetSlack>, u64, u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            if !options.full_report && (c as usize) > first_bad.load(Ordering::Relaxed) {
                return (Vec::new(), 0, 0);
            }
            let lo = (c * chunk).max(1);
            let hi = ((c + 1) * chunk).min(full);
            let mut found = Vec::new();
            let mut count = 0u64;
            let mut checked = 0u64;
            for mask in lo..hi {
                checked += 1;
                let (lhs, rhs) = mask_slack(mask, &tris, k, boundary_mask);
                let slack = lhs - rhs;
                if slack <= SLACK_TOLERANCE {
                    count += 1;
                    if found.len() < options.max_recorded {
                        found.push(SubsetSlack {
                            subset: mask_to_subset(mask),
                            lhs,
                            rhs,
                            slack,
                        });
                    }
                    if !options.full_report {
                        first_bad.fetch_min(c as usize, Ordering::Relaxed);
                        break;
                    }
                }
            }
            (found, count, checked)
        })
        .collect();

    if options.full_report {
        let mut violations = Vec::new();
        let mut count = 0;
        let mut checked = 0;
        for (found, c, k) in per_chunk {
            count += c;
            checked += k;
            let room = options.max_recorded.saturating_sub(violations.len());
            violations.extend(found.into_iter().take(room));
        }
        (violations, count, checked, false)
    } else {
        // Chunks up to the first violating one always run to completion or to
        // their first violation, so these counts do not depend on scheduling.
        let mut checked = 0;
        for (found, _, k) in per_chunk {
            checked += k;
            if !found.is_empty() {
                return (found, 1, checked, true);
            }
        }
        (Vec::new(), 0, checked, false)
    }
}

/// Subsets tried when exhaustive enumeration is out of reach: singletons,
/// closed vertex neighborhoods, boundary cycles and vertex complements.
pub fn restricted_subsets(surface: &TriangulatedSurface) -> Vec<Vec<usize>> {
    let n = surface.vertex_count();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for v in 0..n {
        out.push(vec![v]);
    }
    for v in 0..n {
        let mut nb = surface.neighbors(v).to_vec();
        nb.push(v);
        nb.sort_unstable();
        if nb.len() < n {
            out.push(nb);
        }
    }
    for cycle in surface.boundary_cycles() {
        let mut c = cycle.clone();
        c.sort_unstable();
        if c.len() < n {
            out.push(c);
        }
    }
    if n > 1 {
        for v in 0..n {
            out.push((0..n).filter(|&w| w != v).collect());
        }
    }
    out.sort();
    out.dedup();
    out
}

fn enumerate_restricted(
    surface: &TriangulatedSurface,
    theta: &AngleAssignment,
    target: &CurvatureTarget,
    options: &AttainabilityOptions,
) -> Result<Enumeration, ConditionsError> {
    let subsets = restricted_subsets(surface);
    let results = subsets
        .par_iter()
        .map(|a| subset_slack(surface, theta, target, a))
        .collect::<Result<Vec<_>, _>>()?;
    let checked = results.len() as u64;
    let mut violations = Vec::new();
    let mut count = 0;
    for s in results.into_iter().filter(|s| !s.passes()) {
        count += 1;
        if violations.len() < options.max_recorded {
            violations.push(s);
        }
        if !options.full_report {
            return Ok((violations, 1, checked, true));
        }
    }
    Ok((violations, count, checked, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::builders;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_3;

    fn full() -> AttainabilityOptions {
        AttainabilityOptions {
            full_report: true,
            ..Default::default()
        }
    }

    #[test]
    fn c1_examples() {
        let s = builders::fan(4);
        assert!(check_c1(&s, &AngleAssignment::uniform(&s, 0.0).unwrap()).is_empty());
        assert!(check_c1(&s, &AngleAssignment::uniform(&s, FRAC_PI_3).unwrap()).is_empty());
        let bad = check_c1(&s, &AngleAssignment::uniform(&s, 0.9 * PI).unwrap());
        assert_eq!(bad.len(), 4);
        let c = (0.9 * PI).cos();
        assert!((bad[0].xi[0] - (c + c * c)).abs() < 1e-15);
        assert!(bad[0].xi[0] < -0.04);
    }

    #[test]
    fn target_examples() {
        let s = builders::fan(6);
        let mut k = vec![FRAC_PI_3; 7];
        k[0] = 0.0;
        let t = CurvatureTarget::explicit(&s, Geometry::Euclidean, k.clone()).unwrap();
        assert!(check_target(&s, &t).ok());

        let h = CurvatureTarget::zero(&s, Geometry::Hyperbolic);
        assert!(matches!(
            check_target(&s, &h).failures[..],
            [TargetFailure::GaussBonnet { .. }]
        ));

        k[1] = PI;
        let t = CurvatureTarget::explicit(&s, Geometry::Hyperbolic, k).unwrap();
        let fails = check_target(&s, &t).failures;
        assert!(fails.contains(&TargetFailure::CurvatureBound {
            vertex: 1,
            value: PI,
            bound: PI
        }));
    }

    #[test]
    fn fan_target_attainable() {
        let s = builders::fan(6);
        let th = AngleAssignment::uniform(&s, 0.0).unwrap();
        let mut k = vec![FRAC_PI_3; 7];
        k[0] = 0.0;
        let t = CurvatureTarget::explicit(&s, Geometry::Euclidean, k).unwrap();
        let rep = attainability(&s, &th, &t, &full()).unwrap();
        assert!(rep.attainable, "{:?}", rep.violations.first());
        assert!(rep.exhaustive);
        assert_eq!(rep.subsets_checked, (1 << 7) - 2);
    }

    #[test]
    fn torus_zero_target_attainable() {
        let s = builders::seven_vertex_torus();
        let th = AngleAssignment::uniform(&s, 0.0).unwrap();
        let t = CurvatureTarget::zero(&s, Geometry::Euclidean);
        let rep = attainability(&s, &th, &t, &full()).unwrap();
        assert!(rep.attainable);
        assert_eq!(rep.subsets_checked, 126);
    }

    #[test]
    fn hyperbolic_disk_zero_not_attainable() {
        let s = builders::fan(6);
        let th = AngleAssignment::uniform(&s, 0.0).unwrap();
        let t = CurvatureTarget::zero(&s, Geometry::Hyperbolic);
        let rep = attainability(&s, &th, &t, &Default::default()).unwrap();
        assert!(!rep.attainable);
        assert!(!rep.target.ok());
    }

    #[test]
    fn adding_pi_breaks_gauss_bonnet() {
        let s = builders::seven_vertex_torus();
        let th = AngleAssignment::uniform(&s, 0.0).unwrap();
        let mut k = vec![0.0; 7];
        k[3] = PI;
        let t = CurvatureTarget::explicit(&s, Geometry::Euclidean, k).unwrap();
        let rep = attainability(&s, &th, &t, &Default::default()).unwrap();
        assert!(!rep.attainable);
        assert!(rep
            .target
            .failures
            .iter()
            .any(|f| matches!(f, TargetFailure::GaussBonnet { .. })));
    }

    #[test]
    fn enumeration_limits() {
        let s = builders::grid_disk(4, 4, |_, _| false);
        let th = AngleAssignment::uniform(&s, 0.0).unwrap();
        let t = CurvatureTarget::mean(&s, Geometry::Euclidean);
        let opts = AttainabilityOptions {
            mode: EnumerationMode::Exhaustive,
            ..Default::default()
        };
        assert_eq!(
            attainability(&s, &th, &t, &opts),
            Err(ConditionsError::EnumerationTooLarge {
                vertices: 25,
                cutoff: 24
            })
        );
        let rep = attainability(&s, &th, &t, &Default::default()).unwrap();
        assert!(!rep.exhaustive);
    }

    #[test]
    fn early_exit_is_deterministic() {
        let s = builders::grid_disk(2, 3, |r, c| (r + c) % 2 == 0);
        let th = AngleAssignment::uniform(&s, 0.0).unwrap();
        let t = CurvatureTarget::zero(&s, Geometry::Hyperbolic);
        let a = attainability(&s, &th, &t, &Default::default()).unwrap();
        let b = attainability(&s, &th, &t, &Default::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.stopped_early);
        let f = attainability(&s, &th, &t, &full()).unwrap();
        // The early report is the lowest-mask violation of the full report.
        assert_eq!(a.violations[0], f.violations[0]);
    }

    #[test]
    fn boundary_phi_target() {
        let s = builders::fan(6);
        let t = CurvatureTarget::boundary_phi(&s, Geometry::Euclidean, &[(1, 1.0)]).unwrap();
        assert_eq!(t.k()[1], 1.0);
        assert_eq!(t.k()[2], 0.0);
        assert!(matches!(
            CurvatureTarget::boundary_phi(&s, Geometry::Euclidean, &[(0, 1.0)]),
            Err(ConditionsError::NotBoundaryVertex { vertex: 0 })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        /// Bitmask fast path agrees with the Euler-characteristic form.
        #[test]
        fn fast_path_matches_subset_analysis(
            thetas in prop::collection::vec(0.0f64..FRAC_PI_3, 24),
            k in prop::collection::vec(-1.0f64..1.0, 9),
            which in 0usize..3,
        ) {
            let s = match which {
                0 => builders::grid_disk(2, 2, |r, c| r == c),
                1 => builders::annulus_with(3, 3, |_, c| c == 1),
                _ => builders::fan(8),
            };
            let n = s.vertex_count();
            let th = AngleAssignment::new(&s, thetas[..s.edge_count()].to_vec()).unwrap();
            let t = CurvatureTarget::explicit(&s, Geometry::Hyperbolic, k[..n].to_vec()).unwrap();
            let tris: Vec<MaskTriangle> = (0..s.triangle_count()).map(|i| MaskTriangle {
                mask: s.triangles()[i].iter().fold(0, |m, &v| m | 1u64 << v),
                vertices: s.triangles()[i],
                thetas: th.triangle_thetas(&s, i),
            }).collect();
            let bm = (0..n).filter(|&v| s.is_boundary_vertex(v)).fold(0u64, |m, v| m | 1 << v);
            for mask in 1u64..(1 << n) {
                let (lhs, rhs) = mask_slack(mask, &tris, t.k(), bm);
                let slow = subset_slack(&s, &th, &t, &mask_to_subset(mask)).unwrap();
                prop_assert!((lhs - slow.lhs).abs() < 1e-12);
                prop_assert!((rhs - slow.rhs).abs() < 1e-12, "mask {mask}: {rhs} vs {}", slow.rhs);
            }
        }
    }
}
