//! Geometry of three mutually intersecting circles in the Euclidean plane or
//! the hyperbolic plane.
//!
//! Inside a triangle, quantities are indexed by local vertex `a ∈ {0, 1, 2}`.
//! `thetas[a]` is the exterior intersection angle of the two circles *other*
//! than `a`, so it lives on the edge opposite `a`, like `lengths[a]`.
//!
//! Everything that can overflow for large hyperbolic radii is evaluated in the
//! log domain: `ln sinh`, `ln cosh`, and the Heron-type products used for the
//! inner angles and the derivative formulas.

use std::f64::consts::{LN_2, PI};

use nalgebra::Matrix3;
use thiserror::Error;

pub mod asymptotics;

/// Slack allowed on `ξ_a ≥ 0` to absorb roundoff in `cos`.
pub const XI_TOLERANCE: f64 = 1e-12;

/// Relative window in which a slightly negative semi-perimeter defect is
/// treated as roundoff and clamped to zero.
pub const DEGENERACY_WINDOW: f64 = 1e-9;

/// Radius above which hyperbolic lengths switch to the log-domain formula.
const LOG_DOMAIN_RADIUS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Euclidean,
    Hyperbolic,
}

impl Geometry {
    /// `dr/du` for the flow coordinates: `r` (Euclidean) or `sinh r` (hyperbolic).
    pub fn conformal_weight(self, r: f64) -> f64 {
        match self {
            Geometry::Euclidean => r,
            Geometry::Hyperbolic => r.sinh(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Geometry::Euclidean => "euclidean",
            Geometry::Hyperbolic => "hyperbolic",
        }
    }
}

impl std::fmt::Display for Geometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Geometry {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Geometry::Euclidean),
            "hyperbolic" => Ok(Geometry::Hyperbolic),
            other => Err(format!("unknown geometry `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("radius {value} is not a positive finite number")]
    NonPositiveRadius { value: f64 },
    #[error("intersection angle {value} is outside [0, pi)")]
    AngleOutOfRange { value: f64 },
    #[error("condition (C1) fails: xi = {xi:?}")]
    C1Violation { xi: [f64; 3] },
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),
}

/// `ln sinh x` for `x ≥ 0`, finite for all representable `x > 0`.
pub(crate) fn ln_sinh(x: f64) -> f64 {
    if x > 20.0 {
        x - LN_2 + (-(-2.0 * x).exp()).ln_1p()
    } else {
        x.sinh().ln()
    }
}

/// `ln cosh x`, overflow free.
pub(crate) fn ln_cosh(x: f64) -> f64 {
    let x = x.abs();
    x - LN_2 + (-2.0 * x).exp().ln_1p()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    terms.iter().fold(f64::NEG_INFINITY, |acc, &t| log_add_exp(acc, t))
}

/// `arcosh(1 + x)` without cancellation for small `x`.
fn acosh_1p(x: f64) -> f64 {
    (x + (x * (x + 2.0)).sqrt()).ln_1p()
}

fn check_radius(r: f64) -> Result<(), GeometryError> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(GeometryError::NonPositiveRadius { value: r })
    }
}

fn check_angle(theta: f64) -> Result<(), GeometryError> {
    if (0.0..PI).contains(&theta) {
        Ok(())
    } else {
        Err(GeometryError::AngleOutOfRange { value: theta })
    }
}

/// Distance between the centers of two circles of radii `r_a`, `r_b` meeting
/// at exterior angle `theta`.
pub fn edge_length(geometry: Geometry, r_a: f64, r_b: f64, theta: f64) -> Result<f64, GeometryError> {
    check_radius(r_a)?;
    check_radius(r_b)?;
    check_angle(theta)?;
    // 1 + cos θ = 2 cos²(θ/2), kept exact near θ = π.
    let half_cos_sq = (0.5 * theta).cos().powi(2);
    Ok(match geometry {
        Geometry::Euclidean => {
            let d = r_a - r_b;
            (d * d + 4.0 * r_a * r_b * half_cos_sq).sqrt()
        }
        Geometry::Hyperbolic => {
            let d = 0.5 * (r_a - r_b).abs();
            if r_a.max(r_b) <= LOG_DOMAIN_RADIUS {
                // cosh l - 1 = 2 sinh²((a-b)/2) + 2 sinh a sinh b cos²(θ/2)
                let x = 2.0 * d.sinh().powi(2) + 2.0 * r_a.sinh() * r_b.sinh() * half_cos_sq;
                acosh_1p(x)
            } else {
                let t1 = if d > 0.0 { LN_2 + 2.0 * ln_sinh(d) } else { f64::NEG_INFINITY };
                let t2 = LN_2 + ln_sinh(r_a) + ln_sinh(r_b) + half_cos_sq.ln();
                let lx = log_add_exp(t1, t2);
                if lx < 1.0 {
                    acosh_1p(lx.exp())
                } else {
                    let inv = (-lx).exp();
                    lx + (1.0 + inv + (1.0 + 2.0 * inv).sqrt()).ln()
                }
            }
        }
    })
}

/// Exterior intersection angle of two circles whose centers are `dist` apart,
/// or `None` when the circles do not meet at an angle in `[0, π)`.
pub fn intersection_angle(geometry: Geometry, r_a: f64, r_b: f64, dist: f64) -> Option<f64> {
    // sin²(Θ/2) expressed through the gap (r_a + r_b - d), which is what
    // controls Θ near tangency.
    let gap = r_a + r_b - dist;
    let sum = r_a + r_b + dist;
    let sin_sq = match geometry {
        Geometry::Euclidean => gap * sum / (4.0 * r_a * r_b),
        Geometry::Hyperbolic => {
            if gap <= 0.0 {
                gap
            } else {
                (ln_sinh(0.5 * sum) + ln_sinh(0.5 * gap) - ln_sinh(r_a) - ln_sinh(r_b)).exp()
            }
        }
    };
    let tol = 1e-12;
    if sin_sq < -tol || sin_sq > 1.0 + tol || !sin_sq.is_finite() {
        return None;
    }
    Some(2.0 * sin_sq.clamp(0.0, 1.0).sqrt().asin())
}

/// Radii and exterior intersection angles of one triangle, with `(C1)` checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeCircleConfig {
    radii: [f64; 3],
    thetas: [f64; 3],
    cosines: [f64; 3],
    xis: [f64; 3],
}

impl ThreeCircleConfig {
    pub fn new(radii: [f64; 3], thetas: [f64; 3]) -> Result<Self, GeometryError> {
        for &r in &radii {
            check_radius(r)?;
        }
        for &t in &thetas {
            check_angle(t)?;
        }
        let cosines = thetas.map(f64::cos);
        let xis = xi_values(&cosines);
        if xis.iter().any(|&x| x < -XI_TOLERANCE) {
            return Err(GeometryError::C1Violation { xi: xis });
        }
        Ok(Self {
            radii,
            thetas,
            cosines,
            xis,
        })
    }

    pub fn radii(&self) -> [f64; 3] {
        self.radii
    }

    pub fn thetas(&self) -> [f64; 3] {
        self.thetas
    }

    /// `I_a = cos Θ_a`.
    pub fn cosines(&self) -> [f64; 3] {
        self.cosines
    }

    /// `ξ_a = I_a + I_b I_c`.
    pub fn xis(&self) -> [f64; 3] {
        self.xis
    }

    /// Same angles, different radii.
    pub fn with_radii(&self, radii: [f64; 3]) -> Result<Self, GeometryError> {
        for &r in &radii {
            check_radius(r)?;
        }
        Ok(Self { radii, ..*self })
    }

    pub fn lengths(&self, geometry: Geometry) -> Result<[f64; 3], GeometryError> {
        let r = self.radii;
        let mut l = [0.0; 3];
        for (a, la) in l.iter_mut().enumerate() {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            *la = edge_length(geometry, r[b], r[c], self.thetas[a])?;
        }
        Ok(l)
    }
}

/// `ξ` values for cosines `I`, without any validation.
pub fn xi_values(cosines: &[f64; 3]) -> [f64; 3] {
    let [i0, i1, i2] = *cosines;
    [i0 + i1 * i2, i1 + i2 * i0, i2 + i0 * i1]
}

/// Whether the three center distances satisfy the strict triangle inequalities.
pub fn check_triangle_inequality(config: &ThreeCircleConfig, geometry: Geometry) -> bool {
    match config.lengths(geometry) {
        Ok([a, b, c]) => a < b + c && b < c + a && c < a + b,
        Err(_) => false,
    }
}

/// Inner angles, side lengths and area of the triangle of centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleAngles {
    /// `ϑ_a`, the inner angle at center `a`.
    pub angles: [f64; 3],
    /// `l_a`, the side opposite center `a`.
    pub lengths: [f64; 3],
    /// Euclidean area, or the hyperbolic area `π - Σϑ`.
    pub area: f64,
}

impl TriangleAngles {
    pub fn angle_sum(&self) -> f64 {
        self.angles.iter().sum()
    }
}

/// Log-domain Heron data shared by the angle and derivative formulas.
struct Heron {
    lengths: [f64; 3],
    /// `ln f(s)` where `f` is the identity or `sinh`.
    ln_s: f64,
    /// `ln f(s - l_a)`.
    ln_defect: [f64; 3],
}

impl Heron {
    fn new(config: &ThreeCircleConfig, geometry: Geometry) -> Result<Self, GeometryError> {
        let lengths = config.lengths(geometry)?;
        let [l0, l1, l2] = lengths;
        let s = 0.5 * (l0 + l1 + l2);
        let lf = |x: f64| match geometry {
            Geometry::Euclidean => x.ln(),
            Geometry::Hyperbolic => ln_sinh(x),
        };
        let mut ln_defect = [0.0; 3];
        for a in 0..3 {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            let mut d = 0.5 * (lengths[b] + lengths[c] - lengths[a]);
            if d <= 0.0 {
                if d < -DEGENERACY_WINDOW * s {
                    return Err(GeometryError::NumericalDegeneracy(format!(
                        "triangle inequality fails for lengths {lengths:?}"
                    )));
                }
                d = 0.0;
            }
            ln_defect[a] = lf(d);
        }
        Ok(Self {
            lengths,
            ln_s: lf(s),
            ln_defect,
        })
    }

    /// Half-angle formula `tan(ϑ_a/2)² = f(s-l_b) f(s-l_c) / (f(s) f(s-l_a))`.
    fn angles(&self) -> Result<[f64; 3], GeometryError> {
        let mut out = [0.0; 3];
        #[allow(clippy::needless_range_loop)]
        for a in 0..3 {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            let log_tan_sq = self.ln_defect[b] + self.ln_defect[c] - self.ln_s - self.ln_defect[a];
            if log_tan_sq.is_nan() {
                return Err(GeometryError::NumericalDegeneracy(format!(
                    "collapsed triangle with lengths {:?}",
                    self.lengths
                )));
            }
            out[a] = 2.0 * (0.5 * log_tan_sq).exp().atan();
        }
        Ok(out)
    }

    /// `ln Γ` (Euclidean, `Γ = 2·area`) or `ln Υ` (hyperbolic), both equal to
    /// `ln 2 + ½ ln(f(s) Π f(s - l_a))`.
    fn ln_sine_invariant(&self) -> f64 {
        LN_2 + 0.5 * (self.ln_s + self.ln_defect.iter().sum::<f64>())
    }
}

pub fn inner_angles(config: &ThreeCircleConfig, geometry: Geometry) -> Result<TriangleAngles, GeometryError> {
    let heron = Heron::new(config, geometry)?;
    let angles = heron.angles()?;
    let area = match geometry {
        Geometry::Euclidean => 0.5 * heron.ln_sine_invariant().exp(),
        Geometry::Hyperbolic => PI - angles.iter().sum::<f64>(),
    };
    Ok(TriangleAngles {
        angles,
        lengths: heron.lengths,
        area,
    })
}

/// `∂ϑ_a/∂u_b` where `u` are the flow coordinates (`du = dr/r` Euclidean,
/// `du = dr/sinh r` hyperbolic).
///
/// Off-diagonal entries use the closed form
/// `r_j ∂ϑ_i/∂r_j = (sin²Θ_k r_i² r_j² + (ξ_i r_i + ξ_j r_j) r_i r_j r_k) / (Γ l_k²)`
/// and its hyperbolic counterpart
/// `(sin²Θ_k a_k x_i² x_j² + (ξ_i a_j x_i + ξ_j a_i x_j) x_i x_j x_k) / (Υ sinh² l_k)`
/// with `a = cosh r`, `x = sinh r`, evaluated once per pair so the matrix is
/// exactly symmetric and its off-diagonal part is non-negative. Euclidean
/// diagonals follow from scale invariance (rows sum to zero); hyperbolic
/// diagonals come from the chain rule through the side lengths.
pub fn conformal_angle_derivatives(
    config: &ThreeCircleConfig,
    geometry: Geometry,
) -> Result<Matrix3<f64>, GeometryError> {
    let heron = Heron::new(config, geometry)?;
    let angles = heron.angles()?;
    let ln_inv = heron.ln_sine_invariant();
    if !ln_inv.is_finite() {
        return Err(GeometryError::NumericalDegeneracy(
            "zero-area triangle of centers".into(),
        ));
    }
    let r = config.radii;
    let (ln_a, ln_x, ln_len): ([f64; 3], [f64; 3], [f64; 3]) = match geometry {
        Geometry::Euclidean => ([0.0; 3], r.map(f64::ln), heron.lengths.map(f64::ln)),
        Geometry::Hyperbolic => (r.map(ln_cosh), r.map(ln_sinh), heron.lengths.map(ln_sinh)),
    };
    // (C1) holds, so negative ξ can only be roundoff.
    let ln_xi = config.xis.map(|x| x.max(0.0).ln());

    let mut m = Matrix3::zeros();
    for k in 0..3 {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        let ln_sin_k = config.thetas[k].sin().ln();
        let terms = [
            2.0 * (ln_sin_k + ln_x[i] + ln_x[j]) + ln_a[k],
            ln_xi[i] + ln_a[j] + 2.0 * ln_x[i] + ln_x[j] + ln_x[k],
            ln_xi[j] + ln_a[i] + ln_x[i] + 2.0 * ln_x[j] + ln_x[k],
        ];
        let w = (log_sum_exp(&terms) - ln_inv - 2.0 * ln_len[k]).exp();
        m[(i, j)] = w;
        m[(j, i)] = w;
    }

    match geometry {
        Geometry::Euclidean => {
            for i in 0..3 {
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                m[(i, i)] = -(m[(i, j)] + m[(i, k)]);
            }
        }
        Geometry::Hyperbolic => {
            let cos = angles.map(f64::cos);
            for i in 0..3 {
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                // ∂l_j/∂r_i · sinh l_j, scaled by e^{-(r_i + r_k)}, and likewise for l_k.
                let pj = scaled_length_rate(r[i], r[k], config.thetas[j]);
                let pk = scaled_length_rate(r[i], r[j], config.thetas[k]);
                let base = ln_x[i] + ln_len[i] - ln_inv + r[i];
                let tj = cos[k] * (base - ln_len[j] + r[k]).exp() * pj;
                let tk = cos[j] * (base - ln_len[k] + r[j]).exp() * pk;
                m[(i, i)] = -(tj + tk);
            }
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NumericalDegeneracy(format!(
            "non-finite angle derivative for radii {r:?}"
        )));
    }
    Ok(m)
}

/// `e^{-(r_i + r_o)} (cosh r_o sinh r_i + cos Θ cosh r_i sinh r_o)`, written as
/// `sinh(r_i - r_o) + 2cos²(Θ/2) cosh r_i sinh r_o` to avoid cancellation.
fn scaled_length_rate(r_i: f64, r_o: f64, theta: f64) -> f64 {
    let diff = -(-2.0 * r_o).exp() * (-2.0 * (r_i - r_o)).exp_m1() * 0.5;
    let cosh_hat = 0.5 * (1.0 + (-2.0 * r_i).exp());
    let sinh_hat = -0.5 * (-2.0 * r_o).exp_m1();
    diff + 2.0 * (0.5 * theta).cos().powi(2) * cosh_hat * sinh_hat
}

/// `∂ϑ_a/∂r_b`.
pub fn angle_derivatives(config: &ThreeCircleConfig, geometry: Geometry) -> Result<Matrix3<f64>, GeometryError> {
    let mut m = conformal_angle_derivatives(config, geometry)?;
    for b in 0..3 {
        let w = geometry.conformal_weight(config.radii[b]);
        for a in 0..3 {
            m[(a, b)] /= w;
        }
    }
    Ok(m)
}

/// `∂Area/∂r_a = -Σ_b ∂ϑ_b/∂r_a` for a hyperbolic triangle.
pub fn hyperbolic_area_derivatives(config: &ThreeCircleConfig) -> Result<[f64; 3], GeometryError> {
    let d = angle_derivatives(config, Geometry::Hyperbolic)?;
    Ok([0, 1, 2].map(|a| -(d[(0, a)] + d[(1, a)] + d[(2, a)])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, SQRT_2};

    fn cfg(r: [f64; 3], t: [f64; 3]) -> ThreeCircleConfig {
        ThreeCircleConfig::new(r, t).unwrap()
    }

    #[test]
    fn euclidean_lengths() {
        assert!((edge_length(Geometry::Euclidean, 1.0, 1.0, 0.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((edge_length(Geometry::Euclidean, 1.0, 1.0, FRAC_PI_2).unwrap() - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn hyperbolic_tangent_lengths_add() {
        for t in [1e-6, 0.3, 1.0, 7.5, 29.0, 31.0, 50.0, 200.0] {
            let l = edge_length(Geometry::Hyperbolic, t, t, 0.0).unwrap();
            assert!((l - 2.0 * t).abs() <= 1e-13 * (2.0 * t), "t={t} l={l}");
        }
    }

    #[test]
    fn hyperbolic_length_reference_value() {
        // arcosh(cosh1 cosh2 + sinh1 sinh2 / 2) to 17 digits.
        let reference = 2.7606288199639016;
        let l = edge_length(Geometry::Hyperbolic, 1.0, 2.0, FRAC_PI_3).unwrap();
        assert!((l - reference).abs() < 1e-14, "{l}");
    }

    #[test]
    fn hyperbolic_log_domain_matches_direct_form() {
        // Both branches agree where they overlap in validity.
        for (a, b, th) in [(30.5, 0.2, 1.0), (31.0, 29.0, 2.5), (40.0, 45.0, 0.0), (35.0, 35.0, 3.0)] {
            let x = 2.0 * (0.5 * f64::abs(a - b)).sinh().powi(2)
                + 2.0 * f64::sinh(a) * f64::sinh(b) * f64::cos(0.5 * th).powi(2);
            let direct = acosh_1p(x);
            let l = edge_length(Geometry::Hyperbolic, a, b, th).unwrap();
            assert!((l - direct).abs() <= 1e-12 * direct, "{a} {b} {th}: {l} vs {direct}");
        }
        assert!(edge_length(Geometry::Hyperbolic, 400.0, 500.0, 1.0).unwrap().is_finite());
    }

    #[test]
    fn length_errors() {
        assert_eq!(
            edge_length(Geometry::Euclidean, 0.0, 1.0, 0.0),
            Err(GeometryError::NonPositiveRadius { value: 0.0 })
        );
        assert!(matches!(
            edge_length(Geometry::Hyperbolic, 1.0, 1.0, PI),
            Err(GeometryError::AngleOutOfRange { .. })
        ));
    }

    #[test]
    fn c1_violation_detected() {
        let t = 0.9 * PI;
        let err = ThreeCircleConfig::new([1.0; 3], [t; 3]).unwrap_err();
        match err {
            GeometryError::C1Violation { xi } => {
                assert!((xi[0] - (t.cos() + t.cos().powi(2))).abs() < 1e-15);
                assert!(xi[0] < -0.04);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn equilateral_angles() {
        for t in [0.0, FRAC_PI_2] {
            let a = inner_angles(&cfg([1.0; 3], [t; 3]), Geometry::Euclidean).unwrap();
            for x in a.angles {
                assert!((x - FRAC_PI_3).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn center_corner_right_triangle() {
        let a = inner_angles(&cfg([SQRT_2 - 1.0, 1.0, 1.0], [0.0; 3]), Geometry::Euclidean).unwrap();
        assert!((a.angles[0] - FRAC_PI_2).abs() < 1e-14);
        assert!((a.angles[1] - FRAC_PI_4).abs() < 1e-14);
        assert!((a.angles[2] - FRAC_PI_4).abs() < 1e-14);
        assert!((a.lengths[0] - 2.0).abs() < 1e-15);
        assert!((a.lengths[1] - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn hyperbolic_equilateral_angles() {
        let a = inner_angles(&cfg([1.0; 3], [0.0; 3]), Geometry::Hyperbolic).unwrap();
        // Cosine law oracle: l = 2, cos ϑ = (cosh²2 - cosh 2) / sinh²2.
        let c2 = 2f64.cosh();
        let expected = ((c2 * c2 - c2) / 2f64.sinh().powi(2)).acos();
        for x in a.angles {
            assert!((x - expected).abs() < 1e-13);
            assert!(x < FRAC_PI_3);
        }
        assert!(a.angle_sum() < PI);
        assert!(a.area > 0.0);
    }

    #[test]
    fn degenerate_equality_case_vanishes() {
        let c = cfg([0.7, 1.3, 2.1], [FRAC_PI_2, FRAC_PI_2, 0.0]);
        for g in [Geometry::Euclidean, Geometry::Hyperbolic] {
            let d = angle_derivatives(&c, g).unwrap();
            let scale = d.abs().max();
            assert!(d[(0, 1)].abs() <= 1e-14 * scale, "{g}: {}", d[(0, 1)]);
            assert!(d[(1, 0)].abs() <= 1e-14 * scale);
            assert!(d[(0, 2)] > 1e-3 * scale);
        }
    }

    #[test]
    fn symmetric_configuration_weighted_symmetry() {
        let c = cfg([1.0; 3], [0.0; 3]);
        let d = angle_derivatives(&c, Geometry::Euclidean).unwrap();
        assert_eq!(d[(0, 1)], d[(1, 0)]);
        assert_eq!(d[(1, 2)], d[(2, 1)]);
    }

    #[test]
    fn intersection_angle_inverts_length() {
        for g in [Geometry::Euclidean, Geometry::Hyperbolic] {
            for (a, b, t) in [(1.0, 2.0, 0.0), (0.3, 0.9, 1.2), (2.0, 0.1, 2.9), (5.0, 4.0, 0.4)] {
                let l = edge_length(g, a, b, t).unwrap();
                let back = intersection_angle(g, a, b, l).unwrap();
                assert!((back - t).abs() < 1e-7, "{g} {a} {b} {t} -> {back}");
            }
        }
        assert_eq!(intersection_angle(Geometry::Euclidean, 1.0, 1.0, 2.5), None);
    }

    fn finite_difference(c: &ThreeCircleConfig, g: Geometry) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        for b in 0..3 {
            let h = 1e-6 * c.radii[b];
            let mut up = c.radii;
            let mut dn = c.radii;
            up[b] += h;
            dn[b] -= h;
            let fu = inner_angles(&c.with_radii(up).unwrap(), g).unwrap().angles;
            let fd = inner_angles(&c.with_radii(dn).unwrap(), g).unwrap().angles;
            for a in 0..3 {
                m[(a, b)] = (fu[a] - fd[a]) / (2.0 * h);
            }
        }
        m
    }

    fn config_strategy() -> impl Strategy<Value = ThreeCircleConfig> {
        (
            prop::array::uniform3(-2.0f64..1.5),
            prop::array::uniform3(0.0f64..0.95 * PI),
        )
            .prop_filter_map("C1", |(lr, t)| ThreeCircleConfig::new(lr.map(|x| 10f64.powf(x)), t).ok())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(400))]

        #[test]
        fn lengths_satisfy_triangle_inequality(c in config_strategy()) {
            prop_assert!(check_triangle_inequality(&c, Geometry::Euclidean));
            prop_assert!(check_triangle_inequality(&c, Geometry::Hyperbolic));
        }

        #[test]
        fn angle_bounds(c in config_strategy()) {
            let e = inner_angles(&c, Geometry::Euclidean).unwrap();
            prop_assert!((e.angle_sum() - PI).abs() <= 1e-12 * PI);
            let h = inner_angles(&c, Geometry::Hyperbolic).unwrap();
            prop_assert!(h.angle_sum() < PI);
            prop_assert!(h.area > 0.0);
            for a in 0..3 {
                prop_assert!(e.angles[a] > 0.0 && e.angles[a] < PI - c.thetas()[a]);
                prop_assert!(h.angles[a] > 0.0 && h.angles[a] < PI - c.thetas()[a]);
            }
        }

        #[test]
        fn derivatives_match_finite_differences(c in config_strategy()) {
            for g in [Geometry::Euclidean, Geometry::Hyperbolic] {
                let d = angle_derivatives(&c, g).unwrap();
                let fd = finite_difference(&c, g);
                let scale = d.abs().max();
                for a in 0..3 {
                    for b in 0..3 {
                        let err = (d[(a, b)] - fd[(a, b)]).abs();
                        prop_assert!(err <= 1e-5 * d[(a, b)].abs().max(1e-3 * scale),
                            "{g} ({a},{b}): {} vs {}", d[(a, b)], fd[(a, b)]);
                    }
                }
            }
        }

        #[test]
        fn derivative_signs(c in config_strategy()) {
            for g in [Geometry::Euclidean, Geometry::Hyperbolic] {
                let w = conformal_angle_derivatives(&c, g).unwrap();
                for a in 0..3 {
                    prop_assert!(w[(a, a)] < 0.0);
                    for b in 0..3 {
                        if a != b {
                            prop_assert!(w[(a, b)] >= 0.0);
                            prop_assert!(w[(a, b)] == w[(b, a)]);
                        }
                    }
                }
            }
            let area = hyperbolic_area_derivatives(&c).unwrap();
            prop_assert!(area.iter().all(|&x| x > 0.0));
        }
    }
}
