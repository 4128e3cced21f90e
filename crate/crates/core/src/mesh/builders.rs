//! Small canonical triangulations used by fixtures, examples and tests.

use super::TriangulatedSurface;

fn build(triangles: Vec<[usize; 3]>) -> TriangulatedSurface {
    TriangulatedSurface::build(&triangles).expect("builder produced an invalid surface")
}

/// Fan around center 0 with rim vertices `1..=rim`, triangles `(0, i, i+1)`.
pub fn fan(rim: usize) -> TriangulatedSurface {
    assert!(rim >= 3, "a closed fan needs at least three rim vertices");
    build(
        (1..=rim)
            .map(|i| [0, i, if i == rim { 1 } else { i + 1 }])
            .collect(),
    )
}

/// Unit square split into four triangles around a center vertex 0; corners are `1..=4`.
pub fn square_with_center() -> TriangulatedSurface {
    fan(4)
}

/// Triangle lists of the 7-vertex torus: triangles `(i, i+1, i+3)` and
/// `(i, i+3, i+2)` modulo 7. Every vertex has degree 6.
pub fn seven_vertex_torus_triangles() -> Vec<[usize; 3]> {
    let mut tris = Vec::with_capacity(14);
    for i in 0..7 {
        tris.push([i, (i + 1) % 7, (i + 3) % 7]);
        tris.push([i, (i + 3) % 7, (i + 2) % 7]);
    }
    tris
}

pub fn seven_vertex_torus() -> TriangulatedSurface {
    build(seven_vertex_torus_triangles())
}

/// The 7-vertex torus with its first triangle removed (genus 1, one boundary cycle).
pub fn seven_vertex_torus_minus_face() -> TriangulatedSurface {
    build(seven_vertex_torus_triangles().into_iter().skip(1).collect())
}

fn quad(tris: &mut Vec<[usize; 3]>, v00: usize, v01: usize, v10: usize, v11: usize, flip: bool) {
    if flip {
        tris.push([v00, v01, v11]);
        tris.push([v00, v11, v10]);
    } else {
        tris.push([v00, v01, v10]);
        tris.push([v01, v11, v10]);
    }
}

/// `rows x cols` grid of quads, each split along a diagonal chosen by `flip(r, c)`.
pub fn grid_disk(rows: usize, cols: usize, flip: impl Fn(usize, usize) -> bool) -> TriangulatedSurface {
    assert!(rows >= 1 && cols >= 1);
    let w = cols + 1;
    let mut tris = Vec::with_capacity(2 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let v00 = r * w + c;
            quad(&mut tris, v00, v00 + 1, v00 + w, v00 + w + 1, flip(r, c));
        }
    }
    build(tris)
}

/// Grid periodic in the column direction: an annulus with two boundary cycles.
pub fn annulus(rings: usize, cols: usize) -> TriangulatedSurface {
    annulus_with(rings, cols, |_, _| false)
}

pub fn annulus_with(
    rings: usize,
    cols: usize,
    flip: impl Fn(usize, usize) -> bool,
) -> TriangulatedSurface {
    assert!(rings >= 2 && cols >= 3);
    let idx = |r: usize, c: usize| r * cols + c % cols;
    let mut tris = Vec::new();
    for r in 0..rings - 1 {
        for c in 0..cols {
            quad(
                &mut tris,
                idx(r, c),
                idx(r, c + 1),
                idx(r + 1, c),
                idx(r + 1, c + 1),
                flip(r, c),
            );
        }
    }
    build(tris)
}

/// Grid periodic in both directions.
pub fn torus_grid(rows: usize, cols: usize, flip: impl Fn(usize, usize) -> bool) -> TriangulatedSurface {
    assert!(rows >= 3 && cols >= 3);
    let idx = |r: usize, c: usize| (r % rows) * cols + c % cols;
    let mut tris = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            quad(
                &mut tris,
                idx(r, c),
                idx(r, c + 1),
                idx(r + 1, c),
                idx(r + 1, c + 1),
                flip(r, c),
            );
        }
    }
    build(tris)
}
