//! Oriented triangulated surfaces with boundary, plus the subset combinatorics
//! (star complex `G(A)`, link pairs `Lk(A)`, split Euler characteristics) used
//! by the attainability checker.
//!
//! A [`TriangulatedSurface`] is immutable once built; every query borrows it.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

pub mod builders;

/// Errors raised while building a surface or analyzing a vertex subset.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeshError {
    #[error("surface has no triangles")]
    Empty,
    #[error("triangle {triangle} repeats a vertex")]
    DegenerateTriangle { triangle: usize },
    #[error("vertex indices are not dense: vertex {vertex} is unused")]
    SparseIndices { vertex: usize },
    #[error("triangles {first} and {second} span the same vertex set")]
    DuplicateTriangle { first: usize, second: usize },
    #[error("edge {a}-{b} lies in {count} triangles")]
    NonManifold { a: usize, b: usize, count: usize },
    #[error("vertex {vertex} has a non-manifold neighborhood")]
    NonManifoldVertex { vertex: usize },
    #[error("triangles {first} and {second} induce opposite orientations on edge {a}-{b}")]
    InconsistentOrientation {
        a: usize,
        b: usize,
        first: usize,
        second: usize,
    },
    #[error("the 1-skeleton is disconnected (vertex {vertex} unreachable from vertex 0)")]
    Disconnected { vertex: usize },
    #[error("vertex subset is empty")]
    EmptySubset,
    #[error("vertex {vertex} is out of range for a surface with {count} vertices")]
    VertexOutOfRange { vertex: usize, count: usize },
}

/// An unordered edge, stored as a sorted vertex pair, with its incident triangles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub vertices: (usize, usize),
    /// One entry for boundary edges, two for interior edges.
    pub triangles: Vec<usize>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.triangles.len() == 1
    }
}

/// Oriented simplicial surface, possibly with boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriangulatedSurface {
    vertex_count: usize,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    edge_lookup: HashMap<(usize, usize), usize>,
    /// `triangle_edges[t][a]` is the edge opposite local vertex `a` of triangle `t`.
    triangle_edges: Vec<[usize; 3]>,
    vertex_triangles: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    boundary_vertex: Vec<bool>,
    boundary_cycles: Vec<Vec<usize>>,
}

fn sorted(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriangulatedSurface {
    /// Builds a surface from consistently oriented vertex triples and verifies
    /// the manifold, orientation and connectivity invariants.
    pub fn build(triangle_list: &[[usize; 3]]) -> Result<Self, MeshError> {
        if triangle_list.is_empty() {
            return Err(MeshError::Empty);
        }
        let vertex_count = triangle_list.iter().flatten().max().map_or(0, |m| m + 1);

        let mut used = vec![false; vertex_count];
        let mut seen_sets: HashMap<[usize; 3], usize> = HashMap::new();
        for (t, tri) in triangle_list.iter().enumerate() {
            let [a, b, c] = *tri;
            if a == b || b == c || a == c {
                return Err(MeshError::DegenerateTriangle { triangle: t });
            }
            let mut key = *tri;
            key.sort_unstable();
            if let Some(&first) = seen_sets.get(&key) {
                return Err(MeshError::DuplicateTriangle { first, second: t });
            }
            seen_sets.insert(key, t);
            for &v in tri {
                used[v] = true;
            }
        }
        if let Some(vertex) = used.iter().position(|u| !u) {
            return Err(MeshError::SparseIndices { vertex });
        }

        let mut edges: Vec<Edge> = Vec::new();
        let mut edge_lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut triangle_edges = Vec::with_capacity(triangle_list.len());
        for (t, tri) in triangle_list.iter().enumerate() {
            let mut local = [0usize; 3];
            for a in 0..3 {
                let key = sorted(tri[(a + 1) % 3], tri[(a + 2) % 3]);
                let id = *edge_lookup.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        vertices: key,
                        triangles: Vec::new(),
                    });
                    edges.len() - 1
                });
                edges[id].triangles.push(t);
                local[a] = id;
            }
            triangle_edges.push(local);
        }
        if let Some(e) = edges.iter().find(|e| e.triangles.len() > 2) {
            return Err(MeshError::NonManifold {
                a: e.vertices.0,
                b: e.vertices.1,
                count: e.triangles.len(),
            });
        }

        // Adjacent triangles must traverse their shared edge in opposite directions.
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in triangle_list.iter().enumerate() {
            for a in 0..3 {
                let (from, to) = (tri[a], tri[(a + 1) % 3]);
                if let Some(first) = directed.insert((from, to), t) {
                    let (a, b) = sorted(from, to);
                    return Err(MeshError::InconsistentOrientation {
                        a,
                        b,
                        first,
                        second: t,
                    });
                }
            }
        }

        let mut vertex_triangles = vec![Vec::new(); vertex_count];
        for (t, tri) in triangle_list.iter().enumerate() {
            for &v in tri {
                vertex_triangles[v].push(t);
            }
        }
        let mut neighbors = vec![Vec::new(); vertex_count];
        let mut boundary_vertex = vec![false; vertex_count];
        let mut boundary_degree = vec![0usize; vertex_count];
        for e in &edges {
            let (a, b) = e.vertices;
            neighbors[a].push(b);
            neighbors[b].push(a);
            if e.is_boundary() {
                boundary_vertex[a] = true;
                boundary_vertex[b] = true;
                boundary_degree[a] += 1;
                boundary_degree[b] += 1;
            }
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }

        // Boundary vertices must sit on exactly one boundary cycle, and every
        // vertex star must be a single fan (disk or half-disk).
        for v in 0..vertex_count {
            if boundary_vertex[v] && boundary_degree[v] != 2 {
                return Err(MeshError::NonManifoldVertex { vertex: v });
            }
            if !star_is_connected(v, &vertex_triangles[v], &triangle_edges, &edges) {
                return Err(MeshError::NonManifoldVertex { vertex: v });
            }
        }

        // Connectivity of the 1-skeleton.
        let mut reached = vec![false; vertex_count];
        let mut queue = VecDeque::from([0usize]);
        reached[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &neighbors[v] {
                if !reached[w] {
                    reached[w] = true;
                    queue.push_back(w);
                }
            }
        }
        if let Some(vertex) = reached.iter().position(|r| !r) {
            return Err(MeshError::Disconnected { vertex });
        }

        let boundary_cycles = trace_boundary_cycles(vertex_count, &edges);

        Ok(Self {
            vertex_count,
            triangles: triangle_list.to_vec(),
            edges,
            edge_lookup,
            triangle_edges,
            vertex_triangles,
            neighbors,
            boundary_vertex,
            boundary_cycles,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge id for the unordered pair `{a, b}`, if it is an edge.
    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&sorted(a, b)).copied()
    }

    /// Edges of triangle `t`, indexed by the local vertex they are opposite to.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t]
    }

    pub fn vertex_triangles(&self, v: usize) -> &[usize] {
        &self.vertex_triangles[v]
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.vertex_count)
            .filter(|&v| self.boundary_vertex[v])
            .collect()
    }

    pub fn boundary_edges(&self) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&e| self.edges[e].is_boundary())
            .collect()
    }

    /// Boundary components as cyclic vertex sequences.
    pub fn boundary_cycles(&self) -> &[Vec<usize>] {
        &self.boundary_cycles
    }

    pub fn has_boundary(&self) -> bool {
        !self.boundary_cycles.is_empty()
    }

    /// `|V| - |E| + |F|`.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count as i64 - self.edges.len() as i64 + self.triangles.len() as i64
    }

    /// Number of boundary components `n`.
    pub fn boundary_component_count(&self) -> usize {
        self.boundary_cycles.len()
    }

    /// Genus `g` from `χ = 2 - 2g - n`.
    pub fn genus(&self) -> usize {
        let twice = 2 - self.euler_characteristic() - self.boundary_cycles.len() as i64;
        debug_assert!(twice >= 0 && twice % 2 == 0);
        (twice / 2) as usize
    }

    /// Topological disk: `χ = 1` with a single boundary cycle.
    pub fn is_disk(&self) -> bool {
        self.euler_characteristic() == 1 && self.boundary_cycles.len() == 1
    }

    /// Local index (0..3) of vertex `v` inside triangle `t`.
    pub fn local_index(&self, t: usize, v: usize) -> Option<usize> {
        self.triangles[t].iter().position(|&w| w == v)
    }

    /// Combinatorics of the star complex `G(A)` for a vertex subset `A`.
    pub fn analyze_subset(&self, subset: &[usize]) -> Result<SubsetAnalysis, MeshError> {
        if subset.is_empty() {
            return Err(MeshError::EmptySubset);
        }
        let mut in_a = vec![false; self.vertex_count];
        for &v in subset {
            if v >= self.vertex_count {
                return Err(MeshError::VertexOutOfRange {
                    vertex: v,
                    count: self.vertex_count,
                });
            }
            in_a[v] = true;
        }
        Ok(self.analyze_mask(&in_a))
    }

    fn analyze_mask(&self, in_a: &[bool]) -> SubsetAnalysis {
        let subset: Vec<usize> = (0..self.vertex_count).filter(|&v| in_a[v]).collect();

        let mut star_triangles = Vec::new();
        let mut by_count = [0usize; 3];
        let mut link_pairs = Vec::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            let inside = tri.iter().filter(|&&v| in_a[v]).count();
            if inside == 0 {
                continue;
            }
            star_triangles.push(t);
            by_count[inside - 1] += 1;
            if inside == 1 {
                let local = tri.iter().position(|&v| in_a[v]).unwrap();
                link_pairs.push((self.triangle_edges[t][local], tri[local]));
            }
        }

        let mut interior_edges = Vec::new();
        let mut boundary_edges = Vec::new();
        for (id, e) in self.edges.iter().enumerate() {
            if in_a[e.vertices.0] || in_a[e.vertices.1] {
                if e.is_boundary() {
                    boundary_edges.push(id);
                } else {
                    interior_edges.push(id);
                }
            }
        }

        let (boundary_vertices, interior_vertices): (Vec<usize>, Vec<usize>) =
            subset.iter().partition(|&&v| self.boundary_vertex[v]);

        let chi_open = interior_vertices.len() as i64 - interior_edges.len() as i64
            + star_triangles.len() as i64;
        let chi_boundary = boundary_vertices.len() as i64 - boundary_edges.len() as i64;
        let open_arcs = self.count_open_arcs(in_a, &boundary_edges);

        let analysis = SubsetAnalysis {
            subset,
            star_triangles,
            triangles_by_count: by_count,
            link_pairs,
            interior_edges,
            boundary_edges,
            interior_vertices,
            boundary_vertices,
            chi_open,
            chi_boundary,
            open_arcs,
        };
        debug_assert_eq!(analysis.identity_lhs(), analysis.identity_rhs());
        analysis
    }

    /// Components of `G(A) ∩ ∂S` that are open arcs, found by union-find over
    /// the boundary edges of `G(A)` glued at their vertices in `A`.
    fn count_open_arcs(&self, in_a: &[bool], boundary_edges: &[usize]) -> usize {
        let n = boundary_edges.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut owner: HashMap<usize, usize> = HashMap::new();
        for (slot, &e) in boundary_edges.iter().enumerate() {
            let (a, b) = self.edges[e].vertices;
            for v in [a, b] {
                if !in_a[v] {
                    continue;
                }
                if let Some(&other) = owner.get(&v) {
                    let (ra, rb) = (find(&mut parent, slot), find(&mut parent, other));
                    parent[ra] = rb;
                } else {
                    owner.insert(v, slot);
                }
            }
        }
        let mut edge_total: HashMap<usize, usize> = HashMap::new();
        let mut vertex_total: HashMap<usize, usize> = HashMap::new();
        for slot in 0..n {
            let root = find(&mut parent, slot);
            *edge_total.entry(root).or_default() += 1;
        }
        for (&_, &slot) in owner.iter() {
            let root = find(&mut parent, slot);
            *vertex_total.entry(root).or_default() += 1;
        }
        // A closed boundary cycle has as many vertices as edges; an open arc
        // has one fewer vertex.
        edge_total
            .iter()
            .filter(|(root, &edges)| vertex_total.get(root).copied().unwrap_or(0) < edges)
            .count()
    }
}

fn star_is_connected(
    v: usize,
    incident: &[usize],
    triangle_edges: &[[usize; 3]],
    edges: &[Edge],
) -> bool {
    if incident.len() <= 1 {
        return true;
    }
    let mut reached = vec![false; incident.len()];
    reached[0] = true;
    let mut stack = vec![incident[0]];
    while let Some(t) = stack.pop() {
        for &e in &triangle_edges[t] {
            let (a, b) = edges[e].vertices;
            if a != v && b != v {
                continue;
            }
            for &s in &edges[e].triangles {
                if let Some(pos) = incident.iter().position(|&x| x == s) {
                    if !reached[pos] {
                        reached[pos] = true;
                        stack.push(s);
                    }
                }
            }
        }
    }
    reached.into_iter().all(|r| r)
}

fn trace_boundary_cycles(vertex_count: usize, edges: &[Edge]) -> Vec<Vec<usize>> {
    let mut adjacent: Vec<Vec<usize>> = vec![Vec::new(); vertex_count];
    for e in edges.iter().filter(|e| e.is_boundary()) {
        adjacent[e.vertices.0].push(e.vertices.1);
        adjacent[e.vertices.1].push(e.vertices.0);
    }
    let mut visited = vec![false; vertex_count];
    let mut cycles = Vec::new();
    for start in 0..vertex_count {
        if adjacent[start].is_empty() || visited[start] {
            continue;
        }
        let mut cycle = vec![start];
        visited[start] = true;
        let (mut prev, mut cur) = (start, adjacent[start][0]);
        while cur != start {
            visited[cur] = true;
            cycle.push(cur);
            let next = if adjacent[cur][0] == prev {
                adjacent[cur][1]
            } else {
                adjacent[cur][0]
            };
            prev = cur;
            cur = next;
        }
        cycles.push(cycle);
    }
    cycles
}

/// Cells of the star complex `G(A)` split by position relative to `∂S`.
///
/// Triangles never lie in `∂S`; edges are in `∂S` iff they are boundary edges,
/// vertices iff they are boundary vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetAnalysis {
    /// The subset `A`, sorted.
    pub subset: Vec<usize>,
    /// `F(A)`: triangles with at least one vertex in `A`.
    pub star_triangles: Vec<usize>,
    /// `[|F_1(A)|, |F_2(A)|, |F_3(A)|]`.
    pub triangles_by_count: [usize; 3],
    /// `Lk(A)` as `(edge id, vertex)` pairs.
    pub link_pairs: Vec<(usize, usize)>,
    /// `E_O(A)`.
    pub interior_edges: Vec<usize>,
    /// `E_∂(A)`.
    pub boundary_edges: Vec<usize>,
    /// `V_O(A) = A \ V_∂`.
    pub interior_vertices: Vec<usize>,
    /// `V_∂(A) = A ∩ V_∂`.
    pub boundary_vertices: Vec<usize>,
    /// `χ(G(A) \ ∂S)`.
    pub chi_open: i64,
    /// `χ(G(A) ∩ ∂S)`.
    pub chi_boundary: i64,
    /// Open-arc components of `G(A) ∩ ∂S`, counted by traversal.
    pub open_arcs: usize,
}

impl SubsetAnalysis {
    /// `2|A| - |F(A)| + |Lk(A)| - |A ∩ V_∂|`.
    pub fn identity_lhs(&self) -> i64 {
        2 * self.subset.len() as i64 - self.star_triangles.len() as i64
            + self.link_pairs.len() as i64
            - self.boundary_vertices.len() as i64
    }

    /// `2χ(G(A) \ ∂S) + χ(G(A) ∩ ∂S)`.
    pub fn identity_rhs(&self) -> i64 {
        2 * self.chi_open + self.chi_boundary
    }
}

#[cfg(test)]
mod tests {
    use super::builders::*;
    use super::*;

    #[test]
    fn single_triangle_counts() {
        let s = TriangulatedSurface::build(&[[0, 1, 2]]).unwrap();
        assert_eq!(
            (s.vertex_count(), s.edge_count(), s.triangle_count()),
            (3, 3, 1)
        );
        assert_eq!(s.euler_characteristic(), 1);
        assert_eq!(s.boundary_vertices(), vec![0, 1, 2]);
        assert!(s.is_disk());
    }

    #[test]
    fn hexagonal_fan_counts() {
        let s = fan(6);
        assert_eq!(
            (s.vertex_count(), s.edge_count(), s.triangle_count()),
            (7, 12, 6)
        );
        assert_eq!(s.euler_characteristic(), 1);
        assert_eq!(s.boundary_vertices(), (1..=6).collect::<Vec<_>>());
        assert_eq!(s.genus(), 0);
    }

    #[test]
    fn seven_vertex_torus_counts() {
        let s = seven_vertex_torus();
        assert_eq!(
            (s.vertex_count(), s.edge_count(), s.triangle_count()),
            (7, 21, 14)
        );
        assert_eq!(s.euler_characteristic(), 0);
        assert!(s.boundary_vertices().is_empty());
        assert_eq!(s.genus(), 1);
        for v in 0..7 {
            assert_eq!(s.neighbors(v).len(), 6);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(TriangulatedSurface::build(&[]).unwrap_err(), MeshError::Empty);
        assert!(matches!(
            TriangulatedSurface::build(&[[0, 1, 2], [0, 1, 3]]),
            Err(MeshError::InconsistentOrientation { a: 0, b: 1, first: 0, second: 1 })
        ));
        assert!(matches!(
            TriangulatedSurface::build(&[[0, 1, 2], [3, 4, 5]]),
            Err(MeshError::Disconnected { vertex: 3 })
        ));
        assert!(matches!(
            TriangulatedSurface::build(&[[0, 1, 2], [0, 2, 1]]),
            Err(MeshError::DuplicateTriangle { .. })
        ));
        assert!(matches!(
            TriangulatedSurface::build(&[[0, 1, 3]]),
            Err(MeshError::SparseIndices { vertex: 2 })
        ));
        assert!(matches!(
            TriangulatedSurface::build(&[[0, 1, 2], [2, 1, 0]]),
            Err(MeshError::DuplicateTriangle { .. })
        ));
        // Two triangles touching at a single vertex.
        assert!(matches!(
            TriangulatedSurface::build(&[[0, 1, 2], [0, 3, 4]]),
            Err(MeshError::NonManifoldVertex { vertex: 0 })
        ));
        assert!(matches!(
            TriangulatedSurface::build(&[[0, 1, 1]]),
            Err(MeshError::DegenerateTriangle { triangle: 0 })
        ));
    }

    #[test]
    fn three_triangles_on_an_edge_is_non_manifold() {
        let err = TriangulatedSurface::build(&[[0, 1, 2], [1, 0, 3], [0, 1, 4]]).unwrap_err();
        assert_eq!(err, MeshError::NonManifold { a: 0, b: 1, count: 3 });
    }

    #[test]
    fn fan_center_subset() {
        let s = fan(6);
        let a = s.analyze_subset(&[0]).unwrap();
        assert_eq!(a.star_triangles.len(), 6);
        assert_eq!(a.link_pairs.len(), 6);
        assert!(a.link_pairs.iter().all(|&(e, v)| v == 0 && s.edges()[e].is_boundary()));
        assert_eq!(a.chi_open, 1);
        assert_eq!(a.chi_boundary, 0);
        assert_eq!(a.identity_lhs(), 2);
        assert_eq!(a.identity_rhs(), 2);
    }

    #[test]
    fn single_triangle_corner_subset() {
        let s = TriangulatedSurface::build(&[[0, 1, 2]]).unwrap();
        let a = s.analyze_subset(&[0]).unwrap();
        assert_eq!(a.star_triangles, vec![0]);
        assert_eq!(a.link_pairs, vec![(s.edge_id(1, 2).unwrap(), 0)]);
        assert!(a.interior_edges.is_empty());
        assert_eq!(a.boundary_edges.len(), 2);
        assert_eq!(a.boundary_vertices, vec![0]);
        assert_eq!(a.chi_open, 1);
        assert_eq!(a.chi_boundary, -1);
        assert_eq!(a.open_arcs, 1);
        assert_eq!(a.identity_lhs(), 1);
        assert_eq!(a.identity_rhs(), 1);
    }

    #[test]
    fn whole_vertex_set() {
        for s in [fan(6), seven_vertex_torus(), square_with_center()] {
            let all: Vec<usize> = (0..s.vertex_count()).collect();
            let a = s.analyze_subset(&all).unwrap();
            assert!(a.link_pairs.is_empty());
            assert_eq!(a.star_triangles.len(), s.triangle_count());
            assert_eq!(a.triangles_by_count, [0, 0, s.triangle_count()]);
            assert_eq!(a.open_arcs, 0);
            assert_eq!(a.chi_boundary, 0);
            assert_eq!(a.chi_open, s.euler_characteristic());
        }
    }

    #[test]
    fn subset_errors() {
        let s = fan(4);
        assert_eq!(s.analyze_subset(&[]).unwrap_err(), MeshError::EmptySubset);
        assert_eq!(
            s.analyze_subset(&[9]).unwrap_err(),
            MeshError::VertexOutOfRange { vertex: 9, count: 5 }
        );
    }

    #[test]
    fn boundary_cycles_of_annulus() {
        let s = annulus(3, 8);
        assert_eq!(s.euler_characteristic(), 0);
        assert_eq!(s.boundary_component_count(), 2);
        assert_eq!(s.genus(), 0);
        for c in s.boundary_cycles() {
            assert_eq!(c.len(), 8);
        }
    }

    #[test]
    fn torus_minus_face() {
        let s = seven_vertex_torus_minus_face();
        assert_eq!(s.euler_characteristic(), -1);
        assert_eq!(s.boundary_component_count(), 1);
        assert_eq!(s.genus(), 1);
    }
}
