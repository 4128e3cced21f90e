//! Development of a solved radius vector on a disk-type surface into circle
//! centers, and SVG rendering of the resulting pattern.
//!
//! Hyperbolic patterns live in the Poincaré disk. Triangles are transported
//! with the disk automorphisms `T_p(z) = (z - p) / (1 - p̄ z)`, which preserve
//! orientation and angles.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::circlegeom::{self, Geometry, GeometryError, ThreeCircleConfig};
use crate::curvature::{curvature_map, AngleAssignment, CurvatureError, RadiusVector};
use crate::mesh::TriangulatedSurface;

/// Largest interior curvature accepted as flat.
pub const FLATNESS_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayoutError {
    #[error("surface is not a disk (Euler characteristic {euler}, {boundary_components} boundary components)")]
    NotDiskType { euler: i64, boundary_components: usize },
    #[error("interior vertex {vertex} has curvature {curvature:.3e}; only flat interiors can be developed")]
    NonflatInterior { vertex: usize, curvature: f64 },
    #[error("triangle {triangle}: {source}")]
    Geometry {
        triangle: usize,
        #[source]
        source: GeometryError,
    },
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
}

/// Circle centers and radii after development.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedPattern {
    pub geometry: Geometry,
    /// Centers in the plane, or Poincaré-disk points with `|z| < 1`.
    pub centers: Vec<Complex64>,
    /// Radii in the native metric.
    pub radii: Vec<f64>,
    pub triangles: Vec<[usize; 3]>,
    pub placed: Vec<bool>,
    /// Largest model-space mismatch when a triangle re-derives an already
    /// placed vertex.
    pub closure_error: f64,
    /// Pairs of triangles without a common edge whose interiors overlap.
    pub overlaps: Vec<(usize, usize)>,
}

/// Geodesic distance between two points of the active model.
pub fn model_distance(geometry: Geometry, a: Complex64, b: Complex64) -> f64 {
    match geometry {
        Geometry::Euclidean => (a - b).norm(),
        Geometry::Hyperbolic => {
            let q = (a - b).norm() / (Complex64::new(1.0, 0.0) - a.conj() * b).norm();
            2.0 * q.min(1.0).atanh()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeCheck {
    pub edge: usize,
    pub distance: f64,
    pub expected_length: f64,
    /// Exterior angle of the two drawn circles, if they meet.
    pub angle: Option<f64>,
    pub theta: f64,
}

impl EmbeddedPattern {
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        model_distance(self.geometry, self.centers[a], self.centers[b])
    }

    /// Compare each edge's drawn distance and intersection angle with the
    /// prescribed data.
    pub fn edge_checks(&self, surface: &TriangulatedSurface, theta: &AngleAssignment) -> Vec<EdgeCheck> {
        surface
            .edges()
            .iter()
            .enumerate()
            .map(|(edge, e)| {
                let (a, b) = e.vertices;
                let t = theta.get(edge);
                let distance = self.distance(a, b);
                let expected_length = circlegeom::edge_length(self.geometry, self.radii[a], self.radii[b], t)
                    .unwrap_or(f64::NAN);
                EdgeCheck {
                    edge,
                    distance,
                    expected_length,
                    angle: circlegeom::intersection_angle(self.geometry, self.radii[a], self.radii[b], distance),
                    theta: t,
                }
            })
            .collect()
    }
}

fn to_origin(p: Complex64, z: Complex64) -> Complex64 {
    (z - p) / (Complex64::new(1.0, 0.0) - p.conj() * z)
}

fn from_origin(p: Complex64, z: Complex64) -> Complex64 {
    (z + p) / (Complex64::new(1.0, 0.0) + p.conj() * z)
}

/// Point at distance `dist` from `from`, turned by `angle` counterclockwise
/// from the direction of `toward`.
fn place(geometry: Geometry, from: Complex64, toward: Complex64, dist: f64, angle: f64) -> Complex64 {
    match geometry {
        Geometry::Euclidean => {
            let dir = (toward - from) / (toward - from).norm();
            from + dir * Complex64::from_polar(dist, angle)
        }
        Geometry::Hyperbolic => {
            let q = to_origin(from, toward);
            let local = Complex64::from_polar((0.5 * dist).tanh(), q.arg() + angle);
            from_origin(from, local)
        }
    }
}

/// Develop the triangles breadth-first over the dual graph, starting from
/// triangle 0 with the lower endpoint of its lowest edge at the origin and the
/// other endpoint on the positive x-axis.
pub fn develop(
    surface: &TriangulatedSurface,
    theta: &AngleAssignment,
    r: &RadiusVector,
    geometry: Geometry,
) -> Result<EmbeddedPattern, LayoutError> {
    if !surface.is_disk() {
        return Err(LayoutError::NotDiskType {
            euler: surface.euler_characteristic(),
            boundary_components: surface.boundary_component_count(),
        });
    }
    let curvature = curvature_map(surface, theta, r, geometry)?;
    for v in 0..surface.vertex_count() {
        if !surface.is_boundary_vertex(v) && curvature.k[v].abs() > FLATNESS_TOLERANCE {
            return Err(LayoutError::NonflatInterior {
                vertex: v,
                curvature: curvature.k[v],
            });
        }
    }
    let radii = r.as_slice();
    let tris = surface.triangles();
    let solved = (0..tris.len())
        .map(|t| {
            let cfg = ThreeCircleConfig::new(tris[t].map(|v| radii[v]), theta.triangle_thetas(surface, t))
                .and_then(|c| circlegeom::inner_angles(&c, geometry))
                .map_err(|source| LayoutError::Geometry { triangle: t, source })?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>, LayoutError>>()?;

    let n = surface.vertex_count();
    let mut centers: Vec<Option<Complex64>> = vec![None; n];
    let mut placed = vec![false; tris.len()];
    let mut closure_error: f64 = 0.0;

    // Seed triangle.
    let local_edges = surface.triangle_edges(0);
    let (opp, _) = local_edges
        .iter()
        .enumerate()
        .min_by_key(|(_, &e)| surface.edges()[e].vertices)
        .expect("triangle has edges");
    let (a, b) = surface.edges()[local_edges[opp]].vertices;
    centers[a] = Some(Complex64::new(0.0, 0.0));
    let l_ab = solved[0].lengths[opp];
    centers[b] = Some(match geometry {
        Geometry::Euclidean => Complex64::new(l_ab, 0.0),
        Geometry::Hyperbolic => Complex64::new((0.5 * l_ab).tanh(), 0.0),
    });
    let mut queue = VecDeque::new();
    closure_error = closure_error.max(place_third(surface, geometry, &solved, 0, &mut centers));
    placed[0] = true;
    queue.push_back(0);

    while let Some(t) = queue.pop_front() {
        for &e in &surface.triangle_edges(t) {
            for &s in &surface.edges()[e].triangles {
                if placed[s] {
                    continue;
                }
                closure_error = closure_error.max(place_third(surface, geometry, &solved, s, &mut centers));
                placed[s] = true;
                queue.push_back(s);
            }
        }
    }

    let centers: Vec<Complex64> = centers
        .into_iter()
        .map(|c| c.expect("connected surface places every vertex"))
        .collect();
    let overlaps = find_overlaps(geometry, tris, &centers);
    Ok(EmbeddedPattern {
        geometry,
        centers,
        radii: radii.to_vec(),
        triangles: tris.to_vec(),
        placed,
        closure_error,
        overlaps,
    })
}

/// Place the vertices of triangle `t` that are not yet placed, given at least
/// two placed ones. Returns the closure mismatch for vertices already placed.
fn place_third(
    surface: &TriangulatedSurface,
    geometry: Geometry,
    solved: &[circlegeom::TriangleAngles],
    t: usize,
    centers: &mut [Option<Complex64>],
) -> f64 {
    let tri = surface.triangles()[t];
    // A directed edge (from -> to) in the triangle's cyclic order with both ends placed.
    let start = (0..3)
        .find(|&i| centers[tri[i]].is_some() && centers[tri[(i + 1) % 3]].is_some())
        .expect("triangle reached through a placed edge");
    let (i, j, k) = (start, (start + 1) % 3, (start + 2) % 3);
    let from = centers[tri[i]].unwrap();
    let to = centers[tri[j]].unwrap();
    // The third vertex sits left of from -> to; side l_j joins i and k.
    let z = place(geometry, from, to, solved[t].lengths[j], solved[t].angles[i]);
    match centers[tri[k]] {
        Some(existing) => (existing - z).norm(),
        None => {
            centers[tri[k]] = Some(z);
            0.0
        }
    }
}

/// Straight-edge image of a geodesic triangle: the plane itself, or the
/// Klein model for hyperbolic patterns.
fn straight(geometry: Geometry, z: Complex64) -> Complex64 {
    match geometry {
        Geometry::Euclidean => z,
        Geometry::Hyperbolic => z * (2.0 / (1.0 + z.norm_sqr())),
    }
}

fn find_overlaps(geometry: Geometry, tris: &[[usize; 3]], centers: &[Complex64]) -> Vec<(usize, usize)> {
    let pts: Vec<[Complex64; 3]> = tris
        .iter()
        .map(|t| t.map(|v| straight(geometry, centers[v])))
        .collect();
    let scale = pts
        .iter()
        .flatten()
        .map(|z| z.norm())
        .fold(1e-300, f64::max);
    let eps = 1e-9 * scale;
    let mut out = Vec::new();
    for a in 0..tris.len() {
        for b in a + 1..tris.len() {
            let shared = tris[a].iter().filter(|v| tris[b].contains(v)).count();
            if shared >= 2 {
                continue;
            }
            if !separated(&pts[a], &pts[b], eps) {
                out.push((a, b));
            }
        }
    }
    out
}

/// Separating-axis test; touching within `eps` counts as separated.
fn separated(p: &[Complex64; 3], q: &[Complex64; 3], eps: f64) -> bool {
    for poly in [p, q] {
        for i in 0..3 {
            let e = poly[(i + 1) % 3] - poly[i];
            let normal = Complex64::new(-e.im, e.re);
            let len = normal.norm();
            if len == 0.0 {
                continue;
            }
            let proj = |z: &Complex64| (z.re * normal.re + z.im * normal.im) / len;
            let (pmin, pmax) = p.iter().map(proj).fold((f64::MAX, f64::MIN), |(lo, hi), x| (lo.min(x), hi.max(x)));
            let (qmin, qmax) = q.iter().map(proj).fold((f64::MAX, f64::MIN), |(lo, hi), x| (lo.min(x), hi.max(x)));
            if pmax <= qmin + eps || qmax <= pmin + eps {
                return true;
            }
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvgOptions {
    /// Width and height of the viewport in pixels.
    pub size: f64,
    /// Margin as a fraction of the drawing extent.
    pub margin: f64,
    pub stroke_width: f64,
    pub circle_color: String,
    /// Draw the triangulation (geodesic arcs in hyperbolic mode).
    pub overlay: bool,
    pub overlay_color: String,
}

impl Default for SvgOptions {
    fn default() -> Self {
        Self {
            size: 800.0,
            margin: 0.05,
            stroke_width: 1.5,
            circle_color: "#1f4e9a".into(),
            overlay: false,
            overlay_color: "#b03030".into(),
        }
    }
}

/// Euclidean center and radius of the drawn representative of each circle.
pub fn drawn_circles(pattern: &EmbeddedPattern) -> Vec<(Complex64, f64)> {
    pattern
        .centers
        .iter()
        .zip(&pattern.radii)
        .map(|(&c, &rho)| match pattern.geometry {
            Geometry::Euclidean => (c, rho),
            Geometry::Hyperbolic => {
                let m = c.norm();
                let dir = if m > 0.0 { c / m } else { Complex64::new(1.0, 0.0) };
                let d = 2.0 * m.atanh();
                let far = (0.5 * (d + rho)).tanh();
                let near = (0.5 * (d - rho)).tanh();
                (dir * (0.5 * (far + near)), 0.5 * (far - near))
            }
        })
        .collect()
}

/// Circle through `a`, `b`, `c`, or `None` when they are collinear.
fn circumcircle(a: Complex64, b: Complex64, c: Complex64) -> Option<(Complex64, f64)> {
    let (bx, by) = ((b - a).re, (b - a).im);
    let (cx, cy) = ((c - a).re, (c - a).im);
    let d = 2.0 * (bx * cy - by * cx);
    if d.abs() < 1e-14 * (b - a).norm() * (c - a).norm() {
        return None;
    }
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    let center = a + Complex64::new((cy * b2 - by * c2) / d, (bx * c2 - cx * b2) / d);
    Some((center, (center - a).norm()))
}

pub fn render_svg(pattern: &EmbeddedPattern, options: &SvgOptions) -> String {
    let circles = drawn_circles(pattern);
    let (lo, hi) = match pattern.geometry {
        Geometry::Hyperbolic => (Complex64::new(-1.0, -1.0), Complex64::new(1.0, 1.0)),
        Geometry::Euclidean => circles.iter().fold(
            (Complex64::new(f64::MAX, f64::MAX), Complex64::new(f64::MIN, f64::MIN)),
            |(lo, hi), &(c, r)| {
                (
                    Complex64::new(lo.re.min(c.re - r), lo.im.min(c.im - r)),
                    Complex64::new(hi.re.max(c.re + r), hi.im.max(c.im + r)),
                )
            },
        ),
    };
    let extent = (hi.re - lo.re).max(hi.im - lo.im).max(1e-300);
    let pad = options.margin * extent;
    let scale = options.size / (extent + 2.0 * pad);
    let mid = (lo + hi) * 0.5;
    let half = 0.5 * options.size;
    // Model to screen, with the y axis pointing up.
    let map = |z: Complex64| ((z.re - mid.re) * scale + half, half - (z.im - mid.im) * scale);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{0}" height="{0}" viewBox="0 0 {0} {0}">"#,
        options.size
    );
    if pattern.geometry == Geometry::Hyperbolic {
        let (x, y) = map(Complex64::new(0.0, 0.0));
        let _ = writeln!(
            s,
            r##"  <circle class="boundary" cx="{x:.6}" cy="{y:.6}" r="{:.6}" fill="none" stroke="#000000" stroke-width="{}"/>"##,
            scale,
            options.stroke_width
        );
    }
    for (v, &(c, r)) in circles.iter().enumerate() {
        let (x, y) = map(c);
        let _ = writeln!(
            s,
            r#"  <circle class="vertex" data-vertex="{v}" cx="{x:.6}" cy="{y:.6}" r="{:.6}" fill="none" stroke="{}" stroke-width="{}"/>"#,
            r * scale,
            options.circle_color,
            options.stroke_width
        );
    }
    if options.overlay {
        let mut seen = std::collections::BTreeSet::new();
        for t in &pattern.triangles {
            for i in 0..3 {
                let (a, b) = (t[i].min(t[(i + 1) % 3]), t[i].max(t[(i + 1) % 3]));
                if !seen.insert((a, b)) {
                    continue;
                }
                let (za, zb) = (pattern.centers[a], pattern.centers[b]);
                let (x1, y1) = map(za);
                let (x2, y2) = map(zb);
                let arc = match pattern.geometry {
                    Geometry::Euclidean => None,
                    Geometry::Hyperbolic => {
                        // The geodesic lies on the circle through a, b and the inverse of a.
                        let far = if za.norm() > 1e-12 { za / za.norm_sqr() } else { zb / zb.norm_sqr() };
                        circumcircle(za, zb, far)
                    }
                };
                let d = match arc {
                    Some((center, radius)) => {
                        let (cx, cy) = map(center);
                        let cross = (x1 - cx) * (y2 - cy) - (y1 - cy) * (x2 - cx);
                        format!(
                            "M {x1:.6} {y1:.6} A {0:.6} {0:.6} 0 0 {1} {x2:.6} {y2:.6}",
                            radius * scale,
                            u8::from(cross > 0.0)
                        )
                    }
                    None => format!("M {x1:.6} {y1:.6} L {x2:.6} {y2:.6}"),
                };
                let _ = writeln!(
                    s,
                    r#"  <path class="edge" d="{d}" fill="none" stroke="{}" stroke-width="{}"/>"#,
                    options.overlay_color,
                    0.5 * options.stroke_width
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Interior angle of the polygon `a, b, c` at `b`, in `[0, 2π)`, measured
/// counterclockwise from `b -> c` to `b -> a`.
pub fn turning_angle(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    let ang = ((a - b) / (c - b)).arg();
    if ang < 0.0 {
        ang + 2.0 * PI
    } else {
        ang
    }
}
