use crate::diffusion::Condition;
use crate::error::{Error, Result};
use crate::geometry::{quarter_turn, BinaryGrid, PointCloud, SdfGrid, Vec3};
use crate::wavelet::{dwt3, idwt3, pack_tree, unpack_tree, DiffusibleTree, TreeGeometry};

use super::conditions::{HISTOGRAM_BINS, POINTCLOUD_DIM, VOXEL_CONDITION_RES, VOXEL_DIM};

fn check_turn(axis: usize, quarter_turns: usize) -> Result<()> {
    if axis > 2 {
        return Err(Error::param(format!("rotation axis must be 0, 1 or 2, got {axis}")));
    }
    if quarter_turns > 3 {
        return Err(Error::param(format!("quarter turns must be 0..=3, got {quarter_turns}")));
    }
    Ok(())
}

/// Permutes an x-fastest `n³` lattice so that the value at `p` moves to
/// `R·p`, with `R` the right-handed quarter turns about the lattice centre.
pub fn rotate_lattice<T: Copy>(data: &[T], n: usize, axis: usize, quarter_turns: usize) -> Result<Vec<T>> {
    check_turn(axis, quarter_turns)?;
    if data.len() != n.pow(3) {
        return Err(Error::param(format!("{} values do not form a {n}³ cube", data.len())));
    }
    if quarter_turns == 0 {
        return Ok(data.to_vec());
    }
    let m = (n - 1) as f64;
    let mut out = data.to_vec();
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let c = Vec3::new(2.0 * x as f64 - m, 2.0 * y as f64 - m, 2.0 * z as f64 - m);
                let r = quarter_turn(&c, axis, quarter_turns);
                let idx = |v: f64| ((v + m) / 2.0).round() as usize;
                out[(idx(r.z) * n + idx(r.y)) * n + idx(r.x)] = data[(z * n + y) * n + x];
            }
        }
    }
    Ok(out)
}

/// Quarter-turn rotation of a point set about `pivot`.
pub fn rotate_points(points: &PointCloud, axis: usize, quarter_turns: usize, pivot: &Vec3) -> Result<PointCloud> {
    check_turn(axis, quarter_turns)?;
    Ok(PointCloud {
        points: points.points.iter().map(|p| pivot + quarter_turn(&(p - pivot), axis, quarter_turns)).collect(),
    })
}

/// Exact 90° rotation augmentation.
///
/// Lattices rotate about their centre by index permutation and point
/// clouds about the origin, the centre of the unit cube. Condition
/// features follow the shape: histograms and voxels are permuted, the
/// centroid is rotated and the per-axis spread permuted.
pub trait RotateAugment: Sized {
    fn rotate(&self, axis: usize, quarter_turns: usize) -> Result<Self>;
}

pub fn rotate_augment<T: RotateAugment>(item: &T, axis: usize, quarter_turns: usize) -> Result<T> {
    item.rotate(axis, quarter_turns)
}

impl RotateAugment for SdfGrid {
    fn rotate(&self, axis: usize, quarter_turns: usize) -> Result<Self> {
        let v = rotate_lattice(self.values(), self.resolution(), axis, quarter_turns)?;
        SdfGrid::new(self.spec().clone(), v)
    }
}

impl RotateAugment for BinaryGrid {
    fn rotate(&self, axis: usize, quarter_turns: usize) -> Result<Self> {
        let v = rotate_lattice(self.cells(), self.resolution(), axis, quarter_turns)?;
        BinaryGrid::new(self.resolution(), v)
    }
}

impl RotateAugment for PointCloud {
    fn rotate(&self, axis: usize, quarter_turns: usize) -> Result<Self> {
        rotate_points(self, axis, quarter_turns, &Vec3::zeros())
    }
}

impl RotateAugment for Condition {
    fn rotate(&self, axis: usize, quarter_turns: usize) -> Result<Self> {
        check_turn(axis, quarter_turns)?;
        match self {
            Condition::None => Ok(Condition::None),
            Condition::PointCloud(f) => {
                if f.len() != POINTCLOUD_DIM {
                    return Err(Error::param(format!(
                        "point-cloud features have {POINTCLOUD_DIM} values, got {}",
                        f.len()
                    )));
                }
                let bins = HISTOGRAM_BINS.pow(3);
                let mut out = rotate_lattice(&f[..bins], HISTOGRAM_BINS, axis, quarter_turns)?;
                let centroid = quarter_turn(&Vec3::new(f[bins], f[bins + 1], f[bins + 2]), axis, quarter_turns);
                let spread = quarter_turn(&Vec3::new(f[bins + 3], f[bins + 4], f[bins + 5]), axis, quarter_turns);
                out.extend(centroid.iter());
                out.extend(spread.iter().map(|s| s.abs()));
                Ok(Condition::PointCloud(out))
            }
            Condition::Voxel(f) => {
                if f.len() != VOXEL_DIM {
                    return Err(Error::param(format!("voxel features have {VOXEL_DIM} values, got {}", f.len())));
                }
                let cells = VOXEL_CONDITION_RES.pow(3);
                let mut out = rotate_lattice(&f[..cells], VOXEL_CONDITION_RES, axis, quarter_turns)?;
                out.push(f[cells]);
                Ok(Condition::Voxel(out))
            }
        }
    }
}

/// Rotates the shape a tree describes: reconstruct, rotate the lattice,
/// analyse again and repack. The rotated tree is the exact transform of
/// the rotated reconstruction, which is not in general a permutation of
/// the original coefficients.
pub fn rotate_tree(
    tree: &DiffusibleTree,
    geometry: &TreeGeometry,
    axis: usize,
    quarter_turns: usize,
) -> Result<DiffusibleTree> {
    check_turn(axis, quarter_turns)?;
    let grid = idwt3(&unpack_tree(tree, geometry)?, &geometry.filters)?;
    let turned = grid.rotate(axis, quarter_turns)?;
    pack_tree(&dwt3(&turned, &geometry.filters, TreeGeometry::LEVELS)?)
}
