use rand::Rng;

use super::{PointCloud, TriangleMesh};
use crate::error::{Error, Result};
use crate::rng;

/// Draws `n` points uniformly by area over the mesh surface.
///
/// A triangle is chosen by inverting the cumulative area, then a point
/// inside it with the square-root barycentric map.
pub fn sample_surface_points(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if mesh.is_empty() {
        return Err(Error::param("cannot sample points on an empty mesh"));
    }
    if n == 0 {
        return Err(Error::param("point count must be at least 1"));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles().len());
    let mut total = 0.0;
    for t in 0..mesh.triangles().len() {
        total += mesh.area(t);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::param("mesh has zero surface area"));
    }
    let mut rng = rng::rng(seed);
    let points = (0..n)
        .map(|_| {
            let target = rng.random::<f64>() * total;
            let t = cumulative
                .partition_point(|&c| c <= target)
                .min(cumulative.len() - 1);
            let [a, b, c] = mesh.corners(t);
            let r1: f64 = rng.random::<f64>().sqrt();
            let r2: f64 = rng.random();
            a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2)
        })
        .collect();
    Ok(PointCloud { points })
}
