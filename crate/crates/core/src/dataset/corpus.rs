use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::Rng;

use super::manifest::{ManifestRecord, Split};
use crate::error::{Error, Result};
use crate::geometry::{GridSpec, ShapeSpec, Vec3};
use crate::rng;

/// Synthetic shape family; each acts as its own dataset tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    Sphere,
    Box,
    Torus,
    Csg,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Sphere, Family::Box, Family::Torus, Family::Csg];

    pub fn name(self) -> &'static str {
        match self {
            Family::Sphere => "sphere",
            Family::Box => "box",
            Family::Torus => "torus",
            Family::Csg => "csg",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::param(format!("unknown shape family {s:?}; expected sphere, box, torus or csg")))
    }
}

/// Draws shapes in a unit frame (the cube `[-0.5, 0.5]³`) keeping a margin
/// `m` from the faces.
struct Sampler<'a> {
    rng: &'a mut rng::Rng,
    margin: f64,
}

impl Sampler<'_> {
    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    /// Centre for a shape reaching `reach` along each axis.
    fn center(&mut self, reach: [f64; 3]) -> [f64; 3] {
        let mut c = [0.0; 3];
        for (ci, r) in c.iter_mut().zip(reach) {
            let room = (0.5 - self.margin - r).max(0.0);
            *ci = if room > 0.0 { self.range(-room, room) } else { 0.0 };
        }
        c
    }

    fn sphere(&mut self) -> ShapeSpec {
        let radius = self.range(0.15, 0.35);
        ShapeSpec::Sphere { center: self.center([radius; 3]), radius }
    }

    fn cuboid(&mut self) -> ShapeSpec {
        let h = [self.range(0.08, 0.3), self.range(0.08, 0.3), self.range(0.08, 0.3)];
        ShapeSpec::Box { center: self.center(h), half_extents: h }
    }

    fn torus(&mut self, min_tube: f64) -> ShapeSpec {
        let major = self.range(0.15, 0.28);
        let minor = self.range(min_tube.max(0.04), 0.1_f64.max(min_tube + 0.01));
        let axis = self.rng.random_range(0..3);
        let mut reach = [major + minor; 3];
        reach[axis] = minor;
        ShapeSpec::Torus { center: self.center(reach), major, minor, axis }
    }

    fn part(&mut self, center: [f64; 3], lo: f64, hi: f64) -> ShapeSpec {
        let size = self.range(lo, hi);
        if self.rng.random_bool(0.5) {
            ShapeSpec::Sphere { center, radius: size }
        } else {
            let h = [size, self.range(lo, hi), self.range(lo, hi)];
            ShapeSpec::Box { center, half_extents: h }
        }
    }

    /// A base part and a smaller part centred inside it, combined by a
    /// random boolean operation.
    fn csg(&mut self) -> ShapeSpec {
        let c = self.center([0.3 + 0.001; 3]);
        let a = Box::new(self.part(c, 0.2, 0.3));
        let offset: [f64; 3] = std::array::from_fn(|_| self.range(-0.1, 0.1));
        let cb = std::array::from_fn(|i| c[i] + offset[i]);
        let b = Box::new(self.part(cb, 0.08, 0.16));
        match self.rng.random_range(0..3) {
            0 => ShapeSpec::Union { a, b },
            1 => ShapeSpec::Intersection { a, b },
            _ => ShapeSpec::Difference { a, b },
        }
    }
}

fn place(shape: ShapeSpec, scale: f64, shift: &Vec3) -> ShapeSpec {
    let p = |c: [f64; 3]| -> [f64; 3] { (Vec3::from(c) * scale + shift).into() };
    let s = |v: [f64; 3]| -> [f64; 3] { v.map(|x| x * scale) };
    let boxed = |x: Box<ShapeSpec>| Box::new(place(*x, scale, shift));
    match shape {
        ShapeSpec::Sphere { center, radius } => ShapeSpec::Sphere { center: p(center), radius: radius * scale },
        ShapeSpec::Box { center, half_extents } => ShapeSpec::Box { center: p(center), half_extents: s(half_extents) },
        ShapeSpec::Torus { center, major, minor, axis } => ShapeSpec::Torus {
            center: p(center),
            major: major * scale,
            minor: minor * scale,
            axis,
        },
        ShapeSpec::Union { a, b } => ShapeSpec::Union { a: boxed(a), b: boxed(b) },
        ShapeSpec::Intersection { a, b } => ShapeSpec::Intersection { a: boxed(a), b: boxed(b) },
        ShapeSpec::Difference { a, b } => ShapeSpec::Difference { a: boxed(a), b: boxed(b) },
    }
}

/// Random shapes per family, sized to the bounding cube of `spec` with a
/// margin of one truncation band plus one voxel.
///
/// Records are `{family}-{i:04}` with path `shapes/{id}.toml`, tagged by
/// family and marked `train`. Every family draws from its own stream, so
/// changing one count leaves the other families' shapes unchanged.
pub fn generate_synthetic_corpus(
    recipe: &[(Family, usize)],
    spec: &GridSpec,
    seed: u64,
) -> Result<Vec<(ShapeSpec, ManifestRecord)>> {
    spec.validate()?;
    let mut seen = Vec::new();
    for (f, _) in recipe {
        if seen.contains(f) {
            return Err(Error::param(format!("family {f} listed twice in the corpus recipe")));
        }
        seen.push(*f);
    }
    let extent = spec.resolution as f64 * spec.spacing;
    let margin = (spec.truncation + spec.spacing) / extent;
    let min_tube = 2.0 * spec.spacing / extent;
    let shift = spec.center();
    let mut out = Vec::new();
    for &(family, count) in recipe {
        let mut r = rng::stage_rng(seed, &format!("corpus/{family}"));
        let mut s = Sampler { rng: &mut r, margin };
        for i in 0..count {
            let unit = match family {
                Family::Sphere => s.sphere(),
                Family::Box => s.cuboid(),
                Family::Torus => s.torus(min_tube),
                Family::Csg => s.csg(),
            };
            let id = format!("{family}-{i:04}");
            let record = ManifestRecord {
                path: PathBuf::from(format!("shapes/{id}.toml")),
                id,
                dataset_tag: family.name().to_string(),
                split: Split::Train,
            };
            out.push((place(unit, extent, &shift), record));
        }
    }
    Ok(out)
}
