use crate::diffusion::Condition;
use crate::error::{Error, Result};
use crate::geometry::{BinaryGrid, PointCloud};

pub const HISTOGRAM_BINS: usize = 8;
/// 8³ histogram, centroid and per-axis standard deviation.
pub const POINTCLOUD_DIM: usize = HISTOGRAM_BINS * HISTOGRAM_BINS * HISTOGRAM_BINS + 6;
pub const VOXEL_CONDITION_RES: usize = 16;
pub const VOXEL_DIM: usize = VOXEL_CONDITION_RES * VOXEL_CONDITION_RES * VOXEL_CONDITION_RES + 1;

fn bin(c: f64) -> usize {
    (((c + 0.5) * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

/// Point-cloud feature over the cube `[-0.5, 0.5]³`: an x-fastest 8³
/// histogram normalised to sum 1 (points outside count in the nearest
/// border bin), then the centroid and the population standard deviation
/// along each axis.
pub fn encode_pointcloud_condition(points: &PointCloud) -> Result<Condition> {
    if points.is_empty() {
        return Err(Error::param("point-cloud condition needs at least one point"));
    }
    let n = points.len() as f64;
    let b = HISTOGRAM_BINS;
    let mut f = vec![0.0; POINTCLOUD_DIM];
    let mut sum = [0.0; 3];
    for p in &points.points {
        if p.iter().any(|c| !c.is_finite()) {
            return Err(Error::data("point cloud has non-finite coordinates"));
        }
        f[(bin(p.z) * b + bin(p.y)) * b + bin(p.x)] += 1.0;
        for a in 0..3 {
            sum[a] += p[a];
        }
    }
    let cells = b.pow(3);
    f[..cells].iter_mut().for_each(|v| *v /= n);
    let mean = sum.map(|s| s / n);
    let mut var = [0.0; 3];
    for p in &points.points {
        for a in 0..3 {
            var[a] += (p[a] - mean[a]).powi(2);
        }
    }
    for a in 0..3 {
        f[cells + a] = mean[a];
        f[cells + 3 + a] = (var[a] / n).sqrt();
    }
    Ok(Condition::PointCloud(f))
}

/// Flattened 16³ occupancy as 0/1 followed by the occupied fraction.
pub fn encode_voxel_condition(occ16: &BinaryGrid) -> Result<Condition> {
    if occ16.resolution() != VOXEL_CONDITION_RES {
        return Err(Error::param(format!(
            "voxel condition needs a {VOXEL_CONDITION_RES}³ grid, got {}³",
            occ16.resolution()
        )));
    }
    let mut f: Vec<f64> = occ16.cells().iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
    f.push(occ16.count() as f64 / occ16.cells().len() as f64);
    Ok(Condition::Voxel(f))
}

/// Max-pools a working-resolution occupancy to 16³ and encodes it.
pub fn voxel_condition(occ: &BinaryGrid) -> Result<Condition> {
    encode_voxel_condition(&occ.max_pool(VOXEL_CONDITION_RES)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{occupancy, sample_surface_points, sdf_from_shape, GridSpec, ShapeSpec, TriangleMesh, Vec3};

    #[test]
    fn single_centre_point() {
        let c = encode_pointcloud_condition(&PointCloud { points: vec![Vec3::zeros()] }).unwrap();
        let f = c.features();
        assert_eq!(f.len(), 518);
        assert_eq!(f[(4 * 8 + 4) * 8 + 4], 1.0);
        assert_eq!(f[..512].iter().sum::<f64>(), 1.0);
        assert!(f[512..].iter().all(|&v| v == 0.0));
        assert!(encode_pointcloud_condition(&PointCloud::default()).is_err());
    }

    #[test]
    fn order_does_not_matter() {
        let mesh = TriangleMesh::icosphere(Vec3::zeros(), 0.3, 2);
        let pc = sample_surface_points(&mesh, 500, 3).unwrap();
        let mut rev = pc.clone();
        rev.points.reverse();
        let (a, b) = (encode_pointcloud_condition(&pc).unwrap(), encode_pointcloud_condition(&rev).unwrap());
        assert_eq!(a.features()[..512], b.features()[..512]);
        for (x, y) in a.features()[512..].iter().zip(&b.features()[512..]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_histogram_matches_direct_binning() {
        let mesh = TriangleMesh::icosphere(Vec3::zeros(), 0.35, 3);
        let pc = sample_surface_points(&mesh, 2500, 11).unwrap();
        let f = encode_pointcloud_condition(&pc).unwrap();
        let mut counts = std::collections::HashMap::new();
        for p in &pc.points {
            let k: Vec<i64> = p.iter().map(|c| ((c + 0.5) / 0.125).floor() as i64).collect();
            *counts.entry(k).or_insert(0usize) += 1;
        }
        for (k, n) in counts {
            let i = (k[2] as usize * 8 + k[1] as usize) * 8 + k[0] as usize;
            assert_eq!(f.features()[i], n as f64 / 2500.0);
        }
        // the two central 2×2×2 bins lie inside the shell
        assert_eq!(f.features()[(3 * 8 + 3) * 8 + 3], 0.0);
        assert_eq!(f.features()[(4 * 8 + 4) * 8 + 4], 0.0);
    }

    #[test]
    fn voxel_extremes_and_volume() {
        let empty = encode_voxel_condition(&BinaryGrid::new(16, vec![false; 4096]).unwrap()).unwrap();
        assert!(empty.features().iter().all(|&v| v == 0.0));
        let full = encode_voxel_condition(&BinaryGrid::new(16, vec![true; 4096]).unwrap()).unwrap();
        assert!(full.features().iter().all(|&v| v == 1.0));
        assert_eq!(full.dim(), 4097);
        assert!(encode_voxel_condition(&BinaryGrid::new(8, vec![true; 512]).unwrap()).is_err());

        let spec = GridSpec::unit_cube(64).unwrap();
        let r = 0.3;
        let g = sdf_from_shape(&ShapeSpec::Sphere { center: [0.0; 3], radius: r }, &spec).unwrap();
        let occ = occupancy(&g);
        let ball = |r: f64| 4.0 / 3.0 * std::f64::consts::PI * r * r * r;
        let fine = occ.count() as f64 / 64f64.powi(3);
        assert!((fine - ball(r)).abs() <= 0.1 * ball(r));
        // pooling keeps every coarse cell that touches the ball
        let frac = voxel_condition(&occ).unwrap().features()[4096];
        assert!(frac >= ball(r) && frac <= ball(r + 3f64.sqrt() / 16.0), "{frac}");
    }
}
