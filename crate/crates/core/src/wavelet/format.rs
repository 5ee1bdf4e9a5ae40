use std::path::Path;

use super::dwt::{level_sides, Volume, WaveletDecomposition};
use super::filters::{Boundary, WaveletFamily, WaveletFilterPair};
use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Vec3};
use crate::io::{read_parsed, write_atomic, Reader, Writer};

/// `WDC1` layout, little-endian: magic, `u32` family tag, `u32` boundary
/// tag, `u32` levels, the lattice as in `SDF1` (`u32` N, `f32` origin xyz,
/// spacing, truncation), then `f32` coefficients: the coarse cube followed
/// by every level from coarsest to finest, seven subbands each, x fastest.
pub fn decomposition_bytes(d: &WaveletDecomposition) -> Vec<u8> {
    let s = &d.spec;
    let mut w = Writer::new(b"WDC1");
    w.u32(d.filters.family.tag() as usize)
        .u32(d.filters.boundary.tag() as usize)
        .u32(d.levels())
        .u32(s.resolution)
        .f32(s.origin.x)
        .f32(s.origin.y)
        .f32(s.origin.z)
        .f32(s.spacing)
        .f32(s.truncation)
        .f32s(&d.coarse.data);
    for band in d.details.iter().flatten() {
        w.f32s(&band.data);
    }
    w.finish()
}

pub fn parse_decomposition(bytes: &[u8]) -> Result<WaveletDecomposition> {
    let mut r = Reader::new(bytes, b"WDC1", "WDC1 decomposition")?;
    let family = WaveletFamily::from_tag(r.u32()? as u32)?;
    let boundary = Boundary::from_tag(r.u32()? as u32)?;
    let levels = r.u32()?;
    let n = r.u32()?;
    let origin = Vec3::new(r.f32()?, r.f32()?, r.f32()?);
    let (spacing, truncation) = (r.f32()?, r.f32()?);
    let as_data = |e: Error| Error::data(format!("WDC1 decomposition: {e}"));
    let spec = GridSpec::new(n, origin, spacing, truncation).map_err(as_data)?;
    let filters = WaveletFilterPair::new(family, boundary);
    if levels == 0 || levels > 16 {
        return Err(Error::data(format!("WDC1 decomposition: implausible level count {levels}")));
    }
    let sides = level_sides(n, &filters, levels).map_err(as_data)?;
    let cube = |r: &mut Reader, side: usize| -> Result<Volume> { Volume::cube(side, r.f32s(side.pow(3))?) };
    let coarse = cube(&mut r, sides[levels])?;
    let mut details = Vec::with_capacity(levels);
    for j in 0..levels {
        let side = sides[levels - j];
        let mut level = Vec::with_capacity(7);
        for _ in 0..7 {
            level.push(cube(&mut r, side)?);
        }
        details.push(<[Volume; 7]>::try_from(level).expect("seven subbands"));
    }
    r.finish()?;
    Ok(WaveletDecomposition { spec, filters, coarse, details })
}

pub fn write_decomposition(path: &Path, d: &WaveletDecomposition) -> Result<()> {
    write_atomic(path, &decomposition_bytes(d))
}

pub fn read_decomposition(path: &Path) -> Result<WaveletDecomposition> {
    read_parsed(path, parse_decomposition)
}
