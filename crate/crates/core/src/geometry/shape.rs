use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GridSpec, SdfGrid, Vec3};
use crate::error::{Error, Result};

pub const MAX_CSG_DEPTH: usize = 8;

fn z_axis() -> usize {
    2
}

/// Analytic primitive or CSG combination, evaluated as a signed distance.
///
/// CSG uses the usual min/max rules, which give exact distances outside a
/// union and a bound elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ShapeSpec {
    Sphere { center: [f64; 3], radius: f64 },
    Box { center: [f64; 3], half_extents: [f64; 3] },
    /// Ring around `center` whose symmetry axis is `axis` (0 = x, 1 = y, 2 = z).
    Torus {
        center: [f64; 3],
        major: f64,
        minor: f64,
        #[serde(default = "z_axis")]
        axis: usize,
    },
    Union { a: Box<ShapeSpec>, b: Box<ShapeSpec> },
    Intersection { a: Box<ShapeSpec>, b: Box<ShapeSpec> },
    Difference { a: Box<ShapeSpec>, b: Box<ShapeSpec> },
}

impl ShapeSpec {
    pub fn depth(&self) -> usize {
        match self {
            ShapeSpec::Sphere { .. } | ShapeSpec::Box { .. } | ShapeSpec::Torus { .. } => 1,
            ShapeSpec::Union { a, b }
            | ShapeSpec::Intersection { a, b }
            | ShapeSpec::Difference { a, b } => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth() > MAX_CSG_DEPTH {
            return Err(Error::param(format!(
                "CSG tree depth {} exceeds {MAX_CSG_DEPTH}",
                self.depth()
            )));
        }
        self.validate_params()
    }

    fn validate_params(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            ShapeSpec::Sphere { radius, .. } => positive("sphere radius", *radius),
            ShapeSpec::Box { half_extents, .. } => {
                half_extents.iter().try_for_each(|&h| positive("box half-extent", h))
            }
            ShapeSpec::Torus { major, minor, axis, .. } => {
                positive("torus major radius", *major)?;
                positive("torus minor radius", *minor)?;
                if *axis > 2 {
                    return Err(Error::param(format!("torus axis must be 0, 1 or 2, got {axis}")));
                }
                Ok(())
            }
            ShapeSpec::Union { a, b }
            | ShapeSpec::Intersection { a, b }
            | ShapeSpec::Difference { a, b } => {
                a.validate_params()?;
                b.validate_params()
            }
        }
    }

    /// Signed distance at `p`, negative inside.
    pub fn distance(&self, p: &Vec3) -> f64 {
        match self {
            ShapeSpec::Sphere { center, radius } => (p - Vec3::from(*center)).norm() - radius,
            ShapeSpec::Box { center, half_extents } => {
                let q = (p - Vec3::from(*center)).abs() - Vec3::from(*half_extents);
                let outside = q.map(|c| c.max(0.0)).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                outside + inside
            }
            ShapeSpec::Torus { center, major, minor, axis } => {
                let d = p - Vec3::from(*center);
                let h = d[*axis];
                let ring = (d.norm_squared() - h * h).max(0.0).sqrt() - major;
                (ring * ring + h * h).sqrt() - minor
            }
            ShapeSpec::Union { a, b } => a.distance(p).min(b.distance(p)),
            ShapeSpec::Intersection { a, b } => a.distance(p).max(b.distance(p)),
            ShapeSpec::Difference { a, b } => a.distance(p).max(-b.distance(p)),
        }
    }

    /// The same shape after `quarter_turns` right-handed 90° turns about
    /// `axis` (0 = x, 1 = y, 2 = z) around `pivot`.
    pub fn rotated(&self, axis: usize, quarter_turns: usize, pivot: &Vec3) -> ShapeSpec {
        let rot = |c: &[f64; 3]| -> [f64; 3] {
            let v = Vec3::from(*c) - pivot;
            (pivot + quarter_turn(&v, axis, quarter_turns)).into()
        };
        let rot_extent = |h: &[f64; 3]| -> [f64; 3] {
            quarter_turn(&Vec3::from(*h), axis, quarter_turns).abs().into()
        };
        match self {
            ShapeSpec::Sphere { center, radius } => ShapeSpec::Sphere {
                center: rot(center),
                radius: *radius,
            },
            ShapeSpec::Box { center, half_extents } => ShapeSpec::Box {
                center: rot(center),
                half_extents: rot_extent(half_extents),
            },
            ShapeSpec::Torus { center, major, minor, axis: ring_axis } => {
                let mut normal = Vec3::zeros();
                normal[*ring_axis] = 1.0;
                let turned = quarter_turn(&normal, axis, quarter_turns);
                ShapeSpec::Torus {
                    center: rot(center),
                    major: *major,
                    minor: *minor,
                    axis: turned.iamax(),
                }
            }
            ShapeSpec::Union { a, b } => ShapeSpec::Union {
                a: Box::new(a.rotated(axis, quarter_turns, pivot)),
                b: Box::new(b.rotated(axis, quarter_turns, pivot)),
            },
            ShapeSpec::Intersection { a, b } => ShapeSpec::Intersection {
                a: Box::new(a.rotated(axis, quarter_turns, pivot)),
                b: Box::new(b.rotated(axis, quarter_turns, pivot)),
            },
            ShapeSpec::Difference { a, b } => ShapeSpec::Difference {
                a: Box::new(a.rotated(axis, quarter_turns, pivot)),
                b: Box::new(b.rotated(axis, quarter_turns, pivot)),
            },
        }
    }
}

/// Right-handed quarter turns of a vector about a coordinate axis.
pub(crate) fn quarter_turn(v: &Vec3, axis: usize, quarter_turns: usize) -> Vec3 {
    let mut r = *v;
    for _ in 0..quarter_turns % 4 {
        r = match axis {
            0 => Vec3::new(r.x, -r.z, r.y),
            1 => Vec3::new(r.z, r.y, -r.x),
            _ => Vec3::new(-r.y, r.x, r.z),
        };
    }
    r
}

/// Evaluates `shape` at every voxel centre and clamps to `[-τ, τ]`.
pub fn sdf_from_shape(shape: &ShapeSpec, spec: &GridSpec) -> Result<SdfGrid> {
    spec.validate()?;
    shape.validate()?;
    let n = spec.resolution;
    let tau = spec.truncation;
    let values: Vec<f64> = (0..spec.len())
        .into_par_iter()
        .map(|i| {
            let (x, y, z) = (i % n, (i / n) % n, i / (n * n));
            shape.distance(&spec.position(x, y, z)).clamp(-tau, tau)
        })
        .collect();
    SdfGrid::new(spec.clone(), values)
}
