use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_parsed, write_atomic, Reader, Writer};

/// Optional conditioning vector attached to a shape.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Condition {
    #[default]
    None,
    PointCloud(Vec<f64>),
    Voxel(Vec<f64>),
}

impl Condition {
    pub fn variant(&self) -> u32 {
        match self {
            Condition::None => 0,
            Condition::PointCloud(_) => 1,
            Condition::Voxel(_) => 2,
        }
    }

    pub fn features(&self) -> &[f64] {
        match self {
            Condition::None => &[],
            Condition::PointCloud(v) | Condition::Voxel(v) => v,
        }
    }

    pub fn dim(&self) -> usize {
        self.features().len()
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Condition::None)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Condition::None => "none",
            Condition::PointCloud(_) => "pointcloud",
            Condition::Voxel(_) => "voxel",
        }
    }

    fn from_parts(variant: u32, data: Vec<f64>) -> Result<Self> {
        Ok(match variant {
            0 if data.is_empty() => Condition::None,
            0 => return Err(Error::data("CND1: the empty condition carries no data")),
            1 => Condition::PointCloud(data),
            2 => Condition::Voxel(data),
            v => return Err(Error::data(format!("CND1: unknown condition variant {v}"))),
        })
    }
}

/// `CND1` layout, little-endian: magic, `u32` variant (0 none, 1 point
/// cloud, 2 voxel), `u32` dim, then `dim` `f32` values.
pub fn condition_bytes(c: &Condition) -> Vec<u8> {
    let mut w = Writer::new(b"CND1");
    w.u32(c.variant() as usize).u32(c.dim()).f32s(c.features());
    w.finish()
}

pub fn parse_condition(bytes: &[u8]) -> Result<Condition> {
    let mut r = Reader::new(bytes, b"CND1", "CND1 condition")?;
    let variant = r.u32()? as u32;
    let dim = r.u32()?;
    let data = r.f32s(dim)?;
    r.finish()?;
    Condition::from_parts(variant, data)
}

pub fn write_condition(path: &Path, c: &Condition) -> Result<()> {
    write_atomic(path, &condition_bytes(c))
}

pub fn read_condition(path: &Path) -> Result<Condition> {
    read_parsed(path, parse_condition)
}
