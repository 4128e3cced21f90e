//! Limits of the inner angles as radii shrink to zero or (hyperbolic) grow
//! without bound. Used to probe boundary behavior numerically.

use std::f64::consts::PI;

use super::{inner_angles, Geometry, GeometryError, ThreeCircleConfig};

/// An observed quantity next to the value it should approach.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub parameter: f64,
    pub observed: f64,
    pub limit: f64,
}

impl Probe {
    pub fn error(&self) -> f64 {
        (self.observed - self.limit).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AsymptoticProbe {
    /// `r_0 → 0` with `r_1, r_2` fixed: `ϑ_0 → π - Θ_0`.
    ShrinkOne { others: [f64; 2] },
    /// `r_0, r_1 → 0` with `r_2` fixed: `ϑ_0 + ϑ_1 → π`.
    ShrinkTwo { fixed: f64 },
    /// All radii `→ 0` in fixed proportions: `Σϑ → π`.
    ShrinkAll { ratios: [f64; 3] },
    /// Hyperbolic only, `r_0 → ∞` with `r_1, r_2` fixed: `ϑ_0 → 0`.
    GrowOne { others: [f64; 2] },
}

impl AsymptoticProbe {
    /// Evaluate at the moving radius `t`.
    pub fn evaluate(&self, geometry: Geometry, thetas: [f64; 3], t: f64) -> Result<Probe, GeometryError> {
        let (radii, geometry) = match *self {
            AsymptoticProbe::ShrinkOne { others } => ([t, others[0], others[1]], geometry),
            AsymptoticProbe::ShrinkTwo { fixed } => ([t, t, fixed], geometry),
            AsymptoticProbe::ShrinkAll { ratios } => (ratios.map(|q| q * t), geometry),
            AsymptoticProbe::GrowOne { others } => ([t, others[0], others[1]], Geometry::Hyperbolic),
        };
        let angles = inner_angles(&ThreeCircleConfig::new(radii, thetas)?, geometry)?.angles;
        let (observed, limit) = match self {
            AsymptoticProbe::ShrinkOne { .. } => (angles[0], PI - thetas[0]),
            AsymptoticProbe::ShrinkTwo { .. } => (angles[0] + angles[1], PI),
            AsymptoticProbe::ShrinkAll { .. } => (angles.iter().sum(), PI),
            AsymptoticProbe::GrowOne { .. } => (angles[0], 0.0),
        };
        Ok(Probe {
            parameter: t,
            observed,
            limit,
        })
    }

    /// Evaluate along a sequence of parameters.
    pub fn run(&self, geometry: Geometry, thetas: [f64; 3], parameters: &[f64]) -> Result<Vec<Probe>, GeometryError> {
        parameters
            .iter()
            .map(|&t| self.evaluate(geometry, thetas, t))
            .collect()
    }
}

/// Whether the errors along a probe sequence are non-increasing (up to `slack`)
/// and end below `tolerance`.
pub fn converges(probes: &[Probe], tolerance: f64, slack: f64) -> bool {
    let monotone = probes
        .windows(2)
        .all(|w| w[1].error() <= w[0].error() + slack);
    monotone && probes.last().is_some_and(|p| p.error() <= tolerance)
}
