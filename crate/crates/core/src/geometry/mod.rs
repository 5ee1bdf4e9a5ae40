//! Truncated signed distance volumes, triangle meshes and the conversions
//! between them.
//!
//! Sign convention: negative inside, positive outside. A voxel is occupied
//! when its value is `<= 0`.

mod io;
mod marching_cubes;
mod sampling;
mod shape;
mod voxelize;

pub use io::{read_obj, read_sdf, write_obj, write_sdf, obj_bytes, sdf_bytes, parse_obj, parse_sdf};
pub use marching_cubes::marching_cubes;
pub use sampling::sample_surface_points;
pub use shape::{sdf_from_shape, ShapeSpec, MAX_CSG_DEPTH};
pub(crate) use shape::quarter_turn;
pub use voxelize::voxelize_mesh;

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Sampling lattice of a cubic TSDF volume.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub resolution: usize,
    /// World position of voxel (0, 0, 0).
    pub origin: Vec3,
    pub spacing: f64,
    pub truncation: f64,
}

impl GridSpec {
    pub fn new(resolution: usize, origin: Vec3, spacing: f64, truncation: f64) -> Result<Self> {
        let spec = GridSpec {
            resolution,
            origin,
            spacing,
            truncation,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `n³` voxels centred in the cube `[-0.5, 0.5]³`, truncation three voxels.
    pub fn unit_cube(n: usize) -> Result<Self> {
        let h = 1.0 / n as f64;
        let o = -0.5 + 0.5 * h;
        GridSpec::new(n, Vec3::new(o, o, o), h, 3.0 * h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 8 || !self.resolution.is_multiple_of(8) {
            return Err(Error::param(format!(
                "grid resolution must be a multiple of 8 and at least 8, got {}",
                self.resolution
            )));
        }
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return Err(Error::param(format!("grid spacing must be positive, got {}", self.spacing)));
        }
        if !(self.truncation >= self.spacing) || !self.truncation.is_finite() {
            return Err(Error::param(format!(
                "truncation {} must be at least the spacing {}",
                self.truncation, self.spacing
            )));
        }
        if self.origin.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("grid origin must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.resolution.pow(3)
    }

    pub fn is_empty(&self) -> bool {
        self.resolution == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.resolution + y) * self.resolution + x
    }

    #[inline]
    pub fn position(&self, x: usize, y: usize, z: usize) -> Vec3 {
        self.origin + Vec3::new(x as f64, y as f64, z as f64) * self.spacing
    }

    /// World-space centre of the lattice.
    pub fn center(&self) -> Vec3 {
        let half = (self.resolution - 1) as f64 * 0.5 * self.spacing;
        self.origin + Vec3::new(half, half, half)
    }
}

/// Dense TSDF volume, x-fastest storage, every value inside `[-τ, τ]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SdfGrid {
    spec: GridSpec,
    values: Vec<f64>,
}

impl SdfGrid {
    /// Builds a grid, clamping every value to the truncation band.
    pub fn new(spec: GridSpec, mut values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::param(format!(
                "expected {} grid values, got {}",
                spec.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("grid contains non-finite values"));
        }
        let tau = spec.truncation;
        for v in &mut values {
            *v = v.clamp(-tau, tau);
        }
        Ok(SdfGrid { spec, values })
    }

    pub fn constant(spec: GridSpec, value: f64) -> Result<Self> {
        let n = spec.len();
        SdfGrid::new(spec, vec![value; n])
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn resolution(&self) -> usize {
        self.spec.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.spec.index(x, y, z)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Occupancy of a cubic lattice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryGrid {
    resolution: usize,
    cells: Vec<bool>,
}

impl BinaryGrid {
    pub fn new(resolution: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != resolution.pow(3) {
            return Err(Error::param(format!(
                "binary grid of resolution {resolution} needs {} cells, got {}",
                resolution.pow(3),
                cells.len()
            )));
        }
        Ok(BinaryGrid { resolution, cells })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.cells[(z * self.resolution + y) * self.resolution + x]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Max-pool down to `target³`; `target` must divide the resolution.
    pub fn max_pool(&self, target: usize) -> Result<BinaryGrid> {
        if target == 0 || !self.resolution.is_multiple_of(target) {
            return Err(Error::param(format!(
                "cannot pool resolution {} to {target}",
                self.resolution
            )));
        }
        let f = self.resolution / target;
        let mut out = vec![false; target.pow(3)];
        for z in 0..self.resolution {
            for y in 0..self.resolution {
                for x in 0..self.resolution {
                    if self.get(x, y, z) {
                        out[((z / f) * target + y / f) * target + x / f] = true;
                    }
                }
            }
        }
        BinaryGrid::new(target, out)
    }
}

/// Occupied iff the stored distance is `<= 0`.
pub fn occupancy(grid: &SdfGrid) -> BinaryGrid {
    BinaryGrid {
        resolution: grid.resolution(),
        cells: grid.values().iter().map(|&v| v <= 0.0).collect(),
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Indexed triangle soup.
///
/// Construction welds bit-identical vertex positions and drops triangles
/// that repeat a vertex index after welding.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
            return Err(Error::param(format!("triangle {t:?} indexes past {n} vertices")));
        }
        if vertices.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::data("mesh has non-finite vertex coordinates"));
        }
        Ok(Self::welded(vertices, triangles))
    }

    fn welded(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Self {
        let mut remap = Vec::with_capacity(vertices.len());
        let mut seen: HashMap<[u64; 3], u32> = HashMap::new();
        let mut out_v = Vec::new();
        for v in &vertices {
            // -0.0 and 0.0 are the same point
            let key = [
                (v.x + 0.0).to_bits(),
                (v.y + 0.0).to_bits(),
                (v.z + 0.0).to_bits(),
            ];
            let id = *seen.entry(key).or_insert_with(|| {
                out_v.push(*v);
                (out_v.len() - 1) as u32
            });
            remap.push(id);
        }
        let out_t = triangles
            .iter()
            .map(|t| [remap[t[0] as usize], remap[t[1] as usize], remap[t[2] as usize]])
            .filter(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2])
            .collect();
        TriangleMesh {
            vertices: out_v,
            triangles: out_t,
        }
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Number of triangles using each undirected edge.
    pub fn edge_use(&self) -> HashMap<(u32, u32), usize> {
        let mut m = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *m.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        m
    }

    /// True when every edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        !self.triangles.is_empty() && self.edge_use().values().all(|&c| c == 2)
    }

    /// V − E + F.
    pub fn euler_characteristic(&self) -> i64 {
        let used: std::collections::HashSet<u32> = self.triangles.iter().flatten().copied().collect();
        used.len() as i64 - self.edge_use().len() as i64 + self.triangles.len() as i64
    }

    /// Builds an icosphere by repeated midpoint subdivision.
    pub fn icosphere(center: Vec3, radius: f64, subdivisions: usize) -> TriangleMesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Vec3> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
        .collect();
        let mut tris: Vec<[u32; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
            let mut next = Vec::with_capacity(tris.len() * 4);
            let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
                *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                    (verts.len() - 1) as u32
                })
            };
            for &[a, b, c] in &tris {
                let ab = midpoint(a, b, &mut verts);
                let bc = midpoint(b, c, &mut verts);
                let ca = midpoint(c, a, &mut verts);
                next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            tris = next;
        }
        let verts = verts.into_iter().map(|v| center + v * radius).collect();
        TriangleMesh::welded(verts, tris)
    }

    /// Closed axis-aligned box with outward-facing triangles.
    pub fn cuboid(center: Vec3, half: Vec3) -> TriangleMesh {
        let mut verts = Vec::with_capacity(8);
        for i in 0..8 {
            let s = |bit: usize| if i & bit != 0 { 1.0 } else { -1.0 };
            verts.push(center + Vec3::new(s(1) * half.x, s(2) * half.y, s(4) * half.z));
        }
        let tris = vec![
            [0, 4, 6], [0, 6, 2], // -x
            [1, 3, 7], [1, 7, 5], // +x
            [0, 1, 5], [0, 5, 4], // -y
            [2, 6, 7], [2, 7, 3], // +y
            [0, 2, 3], [0, 3, 1], // -z
            [4, 5, 7], [4, 7, 6], // +z
        ];
        TriangleMesh::welded(verts, tris)
    }
}
