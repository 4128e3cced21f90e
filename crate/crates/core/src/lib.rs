//! Circle patterns on triangulated surfaces with prescribed intersection
//! angles and target curvatures, computed by combinatorial Ricci flow or
//! Newton's method on the associated convex energy.

pub mod circlegeom;
pub mod conditions;
pub mod curvature;
pub mod io;
pub mod layout;
pub mod mesh;
pub mod solver;

pub use circlegeom::{Geometry, GeometryError, ThreeCircleConfig};
pub use mesh::{MeshError, TriangulatedSurface};
