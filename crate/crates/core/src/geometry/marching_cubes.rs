//! Marching cubes over an `SdfGrid`.
//!
//! The 256-entry triangle table is generated once from the cube topology
//! rather than transcribed. On a face whose inside corners sit on a
//! diagonal, every inside corner is cut off on its own. The choice depends
//! only on the four face corners, so two cells sharing a face always agree
//! and the output is crack-free.
//!
//! Corner `c` of a cell sits at offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
//! Edge `4·a + k` runs along axis `a` from the `k`-th corner (in increasing
//! order) whose bit `a` is clear.

use std::sync::OnceLock;

use super::{GridSpec, SdfGrid, TriangleMesh, Vec3};
use crate::error::{Error, Result};

const NO_VERTEX: u32 = u32::MAX;

struct Tables {
    edge_corners: [(usize, usize); 12],
    /// Triangles per case as edge triples, outward (towards larger values).
    triangles: Vec<Vec<[usize; 3]>>,
}

fn edge_corners() -> [(usize, usize); 12] {
    let mut edges = [(0, 0); 12];
    for axis in 0..3 {
        let mut k = 0;
        for c in 0..8 {
            if c & (1 << axis) == 0 {
                edges[axis * 4 + k] = (c, c | (1 << axis));
                k += 1;
            }
        }
    }
    edges
}

fn corner_pos(c: usize) -> Vec3 {
    Vec3::new((c & 1) as f64, ((c >> 1) & 1) as f64, ((c >> 2) & 1) as f64)
}

fn build_tables() -> Tables {
    let edges = edge_corners();
    let mid = |e: usize| (corner_pos(edges[e].0) + corner_pos(edges[e].1)) * 0.5;
    let mut triangles = Vec::with_capacity(256);
    for case in 0..256usize {
        let inside = |c: usize| case >> c & 1 == 1;
        let active = |e: usize| inside(edges[e].0) != inside(edges[e].1);
        let mut next = [usize::MAX; 12];
        for axis in 0..3 {
            for side in 0..2 {
                let mut normal = Vec3::zeros();
                normal[axis] = if side == 1 { 1.0 } else { -1.0 };
                let on_face = |c: usize| (c >> axis) & 1 == side;
                let face_edges: Vec<usize> = (0..12)
                    .filter(|&e| on_face(edges[e].0) && on_face(edges[e].1))
                    .collect();
                let live: Vec<usize> = face_edges.iter().copied().filter(|&e| active(e)).collect();
                // (edge, edge, inside corner on the kept side)
                let mut segments: Vec<(usize, usize, usize)> = Vec::new();
                match live.len() {
                    0 => {}
                    2 => {
                        let c = (0..8).find(|&c| on_face(c) && inside(c)).unwrap();
                        segments.push((live[0], live[1], c));
                    }
                    4 => {
                        for c in (0..8).filter(|&c| on_face(c) && inside(c)) {
                            let inc: Vec<usize> = live
                                .iter()
                                .copied()
                                .filter(|&e| edges[e].0 == c || edges[e].1 == c)
                                .collect();
                            segments.push((inc[0], inc[1], c));
                        }
                    }
                    _ => unreachable!("a square face has an even number of sign changes"),
                }
                for (a, b, c) in segments {
                    // walk with the inside part of the face on the left,
                    // seen from outside the cell
                    let d = mid(b) - mid(a);
                    let left = normal.cross(&d);
                    let (from, to) = if (corner_pos(c) - mid(a)).dot(&left) > 0.0 {
                        (a, b)
                    } else {
                        (b, a)
                    };
                    next[from] = to;
                }
            }
        }
        let mut tris = Vec::new();
        let mut seen = [false; 12];
        for start in 0..12 {
            if next[start] == usize::MAX || seen[start] {
                continue;
            }
            let mut ring = vec![start];
            seen[start] = true;
            let mut e = next[start];
            while e != start {
                seen[e] = true;
                ring.push(e);
                e = next[e];
            }
            // the ring winds with its normal pointing inside; reverse it
            for i in 1..ring.len() - 1 {
                tris.push([ring[0], ring[i + 1], ring[i]]);
            }
        }
        triangles.push(tris);
    }
    Tables {
        edge_corners: edges,
        triangles,
    }
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(build_tables)
}

/// Number of triangles emitted for each of the 256 corner configurations.
#[cfg(test)]
fn case_triangle_counts() -> Vec<usize> {
    tables().triangles.iter().map(Vec::len).collect()
}

/// Extracts the `iso` level set. Values `<= iso` count as inside; vertices
/// are placed on cell edges by linear interpolation and shared between
/// neighbouring cells.
pub fn marching_cubes(grid: &SdfGrid, iso: f64) -> Result<TriangleMesh> {
    let spec: &GridSpec = grid.spec();
    let tau = spec.truncation;
    if !(iso > -tau && iso < tau) {
        return Err(Error::param(format!("iso {iso} must lie strictly inside (-{tau}, {tau})")));
    }
    let values = grid.values();
    let below = values.iter().any(|&v| v <= iso);
    let above = values.iter().any(|&v| v > iso);
    if !(below && above) {
        return Err(Error::EmptySurface { iso });
    }

    let t = tables();
    let n = spec.resolution;
    let mut vertex_of = vec![NO_VERTEX; 3 * n * n * n];
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    let mut edge_vertex = |x: usize, y: usize, z: usize, axis: usize, vertices: &mut Vec<Vec3>| -> u32 {
        let key = 3 * spec.index(x, y, z) + axis;
        if vertex_of[key] == NO_VERTEX {
            let (mut x1, mut y1, mut z1) = (x, y, z);
            match axis {
                0 => x1 += 1,
                1 => y1 += 1,
                _ => z1 += 1,
            }
            let v0 = grid.get(x, y, z);
            let v1 = grid.get(x1, y1, z1);
            let f = ((iso - v0) / (v1 - v0)).clamp(0.0, 1.0);
            let p0 = spec.position(x, y, z);
            let p1 = spec.position(x1, y1, z1);
            vertices.push(p0 + (p1 - p0) * f);
            vertex_of[key] = (vertices.len() - 1) as u32;
        }
        vertex_of[key]
    };

    for z in 0..n - 1 {
        for y in 0..n - 1 {
            for x in 0..n - 1 {
                let mut case = 0usize;
                for c in 0..8 {
                    if grid.get(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1)) <= iso {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let mut local = [NO_VERTEX; 12];
                for tri in &t.triangles[case] {
                    let mut ids = [0u32; 3];
                    for (k, &e) in tri.iter().enumerate() {
                        if local[e] == NO_VERTEX {
                            let (c0, _) = t.edge_corners[e];
                            let axis = e / 4;
                            local[e] = edge_vertex(
                                x + (c0 & 1),
                                y + ((c0 >> 1) & 1),
                                z + ((c0 >> 2) & 1),
                                axis,
                                &mut vertices,
                            );
                        }
                        ids[k] = local[e];
                    }
                    triangles.push(ids);
                }
            }
        }
    }
    TriangleMesh::new(vertices, triangles)
}
