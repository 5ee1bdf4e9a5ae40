//! Reconstruction metrics and per-dataset balanced aggregates.

mod report;

pub use report::{parse_report, read_report, report_text, write_report, Aggregates, MetricReport, ReportRow};

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::codec::LatentGrid;
use crate::error::{Error, Result};
use crate::geometry::{sample_surface_points, BinaryGrid, PointCloud, SdfGrid, TriangleMesh};
use crate::wavelet::DiffusibleTree;

pub const DEFAULT_CHAMFER_SAMPLES: usize = 2048;

/// `|a ∧ b| / |a ∨ b|`, and 1 when both grids are empty.
pub fn iou(a: &BinaryGrid, b: &BinaryGrid) -> Result<f64> {
    if a.resolution() != b.resolution() {
        return Err(Error::param(format!(
            "IoU of grids with resolutions {} and {}",
            a.resolution(),
            b.resolution()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.cells().iter().zip(b.cells()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

fn mean_nearest_sq(from: &PointCloud, to: &PointCloud) -> f64 {
    let nearest: Vec<f64> = from
        .points
        .par_iter()
        .map(|p| to.points.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min))
        .collect();
    nearest.iter().sum::<f64>() / nearest.len() as f64
}

/// Symmetric Chamfer distance between two point sets: the average of the
/// two directed mean squared nearest-neighbour distances.
pub fn chamfer_points(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::param("Chamfer distance needs two nonempty point sets"));
    }
    Ok(0.5 * (mean_nearest_sq(a, b) + mean_nearest_sq(b, a)))
}

/// [`chamfer_points`] on `n_samples` area-uniform samples of each mesh,
/// both drawn with `seed`.
pub fn chamfer(a: &TriangleMesh, b: &TriangleMesh, n_samples: usize, seed: u64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::param("Chamfer distance needs two nonempty meshes"));
    }
    if n_samples == 0 {
        return Err(Error::param("Chamfer distance needs at least one sample"));
    }
    chamfer_points(&sample_surface_points(a, n_samples, seed)?, &sample_surface_points(b, n_samples, seed)?)
}

/// Dense values compared by [`grid_mse`].
pub trait GridValues {
    /// Shape that must match between compared values.
    fn grid_shape(&self) -> [usize; 2];
    fn grid_values(&self) -> &[f64];
}

impl GridValues for SdfGrid {
    fn grid_shape(&self) -> [usize; 2] {
        [self.resolution(), 1]
    }

    fn grid_values(&self) -> &[f64] {
        self.values()
    }
}

impl GridValues for DiffusibleTree {
    fn grid_shape(&self) -> [usize; 2] {
        [self.side(), self.channels()]
    }

    fn grid_values(&self) -> &[f64] {
        self.data()
    }
}

impl GridValues for LatentGrid {
    fn grid_shape(&self) -> [usize; 2] {
        [self.side(), self.dim()]
    }

    fn grid_values(&self) -> &[f64] {
        self.values()
    }
}

pub fn grid_mse<T: GridValues + ?Sized>(a: &T, b: &T) -> Result<f64> {
    if a.grid_shape() != b.grid_shape() {
        return Err(Error::param(format!(
            "MSE of differently shaped values {:?} and {:?}",
            a.grid_shape(),
            b.grid_shape()
        )));
    }
    let (x, y) = (a.grid_values(), b.grid_values());
    if x.is_empty() {
        return Ok(0.0);
    }
    Ok(x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / x.len() as f64)
}

/// Dataset-balanced means: every tag weighs the same regardless of its
/// row count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BalancedAggregate {
    pub d_iou: f64,
    pub d_mse: f64,
}

pub fn balanced_aggregate(rows: &[ReportRow]) -> Result<BalancedAggregate> {
    let d = balanced_mean(rows, |r| Some(r.iou))?;
    Ok(BalancedAggregate { d_iou: d, d_mse: balanced_mean(rows, |r| Some(r.mse))? })
}

/// Mean over tags of the per-tag mean of `value`, skipping rows where it
/// is absent and tags left with no values.
pub fn balanced_mean(rows: &[ReportRow], value: impl Fn(&ReportRow) -> Option<f64>) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::param("balanced aggregate of an empty report"));
    }
    let mut tags: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in rows {
        if r.dataset_tag.is_empty() {
            return Err(Error::param(format!("report row {} has no dataset tag", r.id)));
        }
        if let Some(v) = value(r) {
            let e = tags.entry(&r.dataset_tag).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    if tags.is_empty() {
        return Ok(f64::NAN);
    }
    Ok(tags.values().map(|(s, n)| s / *n as f64).sum::<f64>() / tags.len() as f64)
}
