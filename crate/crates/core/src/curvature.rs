//! Cone angles, curvatures and the Jacobian of the curvature map in the flow
//! coordinates `u`.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3};
use rayon::prelude::*;
use thiserror::Error;

use crate::circlegeom::{self, Geometry, GeometryError, ThreeCircleConfig};
use crate::mesh::TriangulatedSurface;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurvatureError {
    #[error("triangle {triangle}: {source}")]
    Geometry {
        triangle: usize,
        #[source]
        source: GeometryError,
    },
    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("no intersection angle given for edge {a}-{b}")]
    MissingEdge { a: usize, b: usize },
    #[error("{a}-{b} is not an edge of the surface")]
    UnknownEdge { a: usize, b: usize },
    #[error("intersection angle {value} on edge {edge} is outside [0, pi)")]
    AngleOutOfRange { edge: usize, value: f64 },
    #[error("radius {value} at vertex {vertex} is not a positive finite number")]
    NonPositiveRadius { vertex: usize, value: f64 },
    #[error("u = {value} at vertex {vertex} is outside the {geometry} domain")]
    DomainViolation {
        vertex: usize,
        value: f64,
        geometry: Geometry,
    },
}

/// Intersection angle per edge id of a fixed surface.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleAssignment {
    theta: Vec<f64>,
}

impl AngleAssignment {
    pub fn new(surface: &TriangulatedSurface, theta: Vec<f64>) -> Result<Self, CurvatureError> {
        if theta.len() != surface.edge_count() {
            return Err(CurvatureError::LengthMismatch {
                expected: surface.edge_count(),
                found: theta.len(),
            });
        }
        for (edge, &value) in theta.iter().enumerate() {
            if !(0.0..PI).contains(&value) {
                return Err(CurvatureError::AngleOutOfRange { edge, value });
            }
        }
        Ok(Self { theta })
    }

    pub fn uniform(surface: &TriangulatedSurface, value: f64) -> Result<Self, CurvatureError> {
        Self::new(surface, vec![value; surface.edge_count()])
    }

    /// Build from values keyed by vertex pairs (either order). Every edge must
    /// be present exactly once.
    pub fn from_pairs(
        surface: &TriangulatedSurface,
        pairs: &HashMap<(usize, usize), f64>,
    ) -> Result<Self, CurvatureError> {
        let mut theta = vec![f64::NAN; surface.edge_count()];
        for (&(a, b), &value) in pairs {
            let e = surface
                .edge_id(a, b)
                .ok_or(CurvatureError::UnknownEdge { a, b })?;
            theta[e] = value;
        }
        if let Some(e) = theta.iter().position(|t| t.is_nan()) {
            let (a, b) = surface.edges()[e].vertices;
            return Err(CurvatureError::MissingEdge { a, b });
        }
        Self::new(surface, theta)
    }

    pub fn values(&self) -> &[f64] {
        &self.theta
    }

    pub fn get(&self, edge: usize) -> f64 {
        self.theta[edge]
    }

    /// Angles of triangle `t`, indexed by the local vertex opposite each edge.
    pub fn triangle_thetas(&self, surface: &TriangulatedSurface, t: usize) -> [f64; 3] {
        surface.triangle_edges(t).map(|e| self.theta[e])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiusVector {
    r: Vec<f64>,
}

impl RadiusVector {
    pub fn new(r: Vec<f64>) -> Result<Self, CurvatureError> {
        if let Some((vertex, &value)) = r.iter().enumerate().find(|(_, &x)| !(x > 0.0 && x.is_finite())) {
            return Err(CurvatureError::NonPositiveRadius { vertex, value });
        }
        Ok(Self { r })
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self, CurvatureError> {
        Self::new(vec![value; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.r
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.r
    }
}

/// Flow coordinates: `u = ln r` (Euclidean) or `u = ln tanh(r/2) < 0` (hyperbolic).
#[derive(Debug, Clone, PartialEq)]
pub struct UCoordinates {
    u: Vec<f64>,
    geometry: Geometry,
}

impl UCoordinates {
    pub fn new(u: Vec<f64>, geometry: Geometry) -> Result<Self, CurvatureError> {
        for (vertex, &value) in u.iter().enumerate() {
            let ok = match geometry {
                Geometry::Euclidean => value.is_finite(),
                Geometry::Hyperbolic => value < 0.0 && value.is_finite(),
            };
            if !ok {
                return Err(CurvatureError::DomainViolation {
                    vertex,
                    value,
                    geometry,
                });
            }
        }
        Ok(Self { u, geometry })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.u
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.u
    }
}

/// `u` for a single radius.
pub fn radius_to_u(r: f64, geometry: Geometry) -> f64 {
    match geometry {
        Geometry::Euclidean => r.ln(),
        Geometry::Hyperbolic => {
            // ln tanh(r/2) = ln(1 - e^{-r}) - ln(1 + e^{-r})
            let e = (-r).exp();
            if r < 1.0 {
                (-(-r).exp_m1()).ln() - e.ln_1p()
            } else {
                (-e).ln_1p() - e.ln_1p()
            }
        }
    }
}

/// Radius for a single `u`; `None` outside the domain or on under/overflow.
pub fn u_to_radius(u: f64, geometry: Geometry) -> Option<f64> {
    let r = match geometry {
        Geometry::Euclidean => u.exp(),
        Geometry::Hyperbolic => {
            if u >= 0.0 || u.is_nan() {
                return None;
            }
            if u < -1.0 {
                2.0 * u.exp().atanh()
            } else {
                u.exp().ln_1p() - (-u.exp_m1()).ln()
            }
        }
    };
    (r > 0.0 && r.is_finite()).then_some(r)
}

pub fn r_to_u(r: &RadiusVector, geometry: Geometry) -> UCoordinates {
    UCoordinates {
        u: r.r.iter().map(|&x| radius_to_u(x, geometry)).collect(),
        geometry,
    }
}

pub fn u_to_r(u: &UCoordinates) -> Result<RadiusVector, CurvatureError> {
    let r = u
        .u
        .iter()
        .enumerate()
        .map(|(vertex, &value)| {
            u_to_radius(value, u.geometry).ok_or(CurvatureError::DomainViolation {
                vertex,
                value,
                geometry: u.geometry,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RadiusVector { r })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureVector {
    pub k: Vec<f64>,
    /// Cone angle at each vertex.
    pub sigma: Vec<f64>,
    /// Sum of triangle areas (hyperbolic) or zero (Euclidean).
    pub total_area: f64,
}

impl CurvatureVector {
    /// `Σ K_i - 2πχ`: zero for Euclidean metrics, the total area for hyperbolic ones.
    pub fn gauss_bonnet_defect(&self, surface: &TriangulatedSurface) -> f64 {
        self.k.iter().sum::<f64>() - 2.0 * PI * surface.euler_characteristic() as f64
    }
}

fn check_lengths(surface: &TriangulatedSurface, theta: &AngleAssignment, n: usize) -> Result<(), CurvatureError> {
    if theta.theta.len() != surface.edge_count() {
        return Err(CurvatureError::LengthMismatch {
            expected: surface.edge_count(),
            found: theta.theta.len(),
        });
    }
    if n != surface.vertex_count() {
        return Err(CurvatureError::LengthMismatch {
            expected: surface.vertex_count(),
            found: n,
        });
    }
    Ok(())
}

fn triangle_config(
    surface: &TriangulatedSurface,
    theta: &AngleAssignment,
    r: &[f64],
    t: usize,
) -> Result<ThreeCircleConfig, CurvatureError> {
    let tri = surface.triangles()[t];
    ThreeCircleConfig::new(tri.map(|v| r[v]), theta.triangle_thetas(surface, t))
        .map_err(|source| CurvatureError::Geometry { triangle: t, source })
}

fn assemble_curvature(surface: &TriangulatedSurface, per_triangle: &[([f64; 3], f64)], geometry: Geometry) -> CurvatureVector {
    let n = surface.vertex_count();
    let mut sigma = vec![0.0; n];
    let mut total_area = 0.0;
    for (t, (angles, area)) in per_triangle.iter().enumerate() {
        for (a, &v) in surface.triangles()[t].iter().enumerate() {
            sigma[v] += angles[a];
        }
        if geometry == Geometry::Hyperbolic {
            total_area += area;
        }
    }
    let k = (0..n)
        .map(|v| {
            let full = if surface.is_boundary_vertex(v) { PI } else { 2.0 * PI };
            full - sigma[v]
        })
        .collect();
    CurvatureVector { k, sigma, total_area }
}

pub fn curvature_map(
    surface: &TriangulatedSurface,
    theta: &AngleAssignment,
    r: &RadiusVector,
    geometry: Geometry,
) -> Result<CurvatureVector, CurvatureError> {
    check_lengths(surface, theta, r.len())?;
    let per_triangle = (0..surface.triangle_count())
        .into_par_iter()
        .map(|t| {
            let cfg = triangle_config(surface, theta, &r.r, t)?;
            let a = circlegeom::inner_angles(&cfg, geometry)
                .map_err(|source| CurvatureError::Geometry { triangle: t, source })?;
            Ok((a.angles, a.area))
        })
        .collect::<Result<Vec<_>, CurvatureError>>()?;
    Ok(assemble_curvature(surface, &per_triangle, geometry))
}

/// Sparse symmetric `∂K_i/∂u_j`, one row per vertex with columns sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Jacobian {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Entry `(i, j)`; zero when `i` and `j` share no triangle.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|p| self.rows[i][p].1)
            .unwrap_or(0.0)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(_, v)| v).sum()).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `max |J - Jᵀ|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Curvatures and Jacobian at `u`, sharing one pass over the triangles.
pub fn curvature_and_jacobian(
    surface: &TriangulatedSurface,
    theta: &AngleAssignment,
    u: &UCoordinates,
) -> Result<(CurvatureVector, Jacobian), CurvatureError> {
    let geometry = u.geometry;
    let r = u_to_r(u)?;
    check_lengths(surface, theta, r.len())?;
    let per_triangle = (0..surface.triangle_count())
        .into_par_iter()
        .map(|t| {
            let cfg = triangle_config(surface, theta, &r.r, t)?;
            let wrap = |source| CurvatureError::Geometry { triangle: t, source };
            let a = circlegeom::inner_angles(&cfg, geometry).map_err(wrap)?;
            let w = circlegeom::conformal_angle_derivatives(&cfg, geometry).map_err(wrap)?;
            Ok(((a.angles, a.area), w))
        })
        .collect::<Result<Vec<_>, CurvatureError>>()?;

    #[allow(clippy::type_complexity)]
    let (angles, derivs): (Vec<([f64; 3], f64)>, Vec<Matrix3<f64>>) = per_triangle.into_iter().unzip();
    let curvature = assemble_curvature(surface, &angles, geometry);

    let n = surface.vertex_count();
    let mut rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|v| {
            let mut cols: Vec<usize> = surface.neighbors(v).to_vec();
            cols.push(v);
            cols.sort_unstable();
            cols.into_iter().map(|c| (c, 0.0)).collect()
        })
        .collect();
    for (t, w) in derivs.iter().enumerate() {
        let tri = surface.triangles()[t];
        for a in 0..3 {
            let row = &mut rows[tri[a]];
            for b in 0..3 {
                let p = row
                    .binary_search_by_key(&tri[b], |&(c, _)| c)
                    .expect("triangle vertices are neighbors");
                // K = const - σ, so ∂K/∂u = -Σ ∂ϑ/∂u.
                row[p].1 -= w[(a, b)];
            }
        }
    }
    Ok((curvature, Jacobian { rows }))
}

pub fn jacobian(
    surface: &TriangulatedSurface,
    theta: &AngleAssignment,
    u: &UCoordinates,
) -> Result<Jacobian, CurvatureError> {
    curvature_and_jacobian(surface, theta, u).map(|(_, j)| j)
}
