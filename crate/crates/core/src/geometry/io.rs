//! ASCII OBJ (vertices and faces only) and the `SDF1` binary grid format.
//!
//! `SDF1` layout, little-endian: magic `SDF1`, `u32` resolution N, `f32`
//! origin[3], `f32` spacing, `f32` truncation, then N³ `f32` values with x
//! varying fastest.

use std::fmt::Write as _;
use std::path::Path;

use super::{GridSpec, SdfGrid, TriangleMesh, Vec3};
use crate::error::{Error, Result};
use crate::io::{read_parsed, write_atomic, Reader, Writer};

pub fn obj_bytes(mesh: &TriangleMesh) -> Vec<u8> {
    let mut s = String::with_capacity(mesh.vertices().len() * 40 + mesh.triangles().len() * 24);
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", v.x as f32, v.y as f32, v.z as f32);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s.into_bytes()
}

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    write_atomic(path, &obj_bytes(mesh))
}

/// Parses `v` and `f` records. Other record types are ignored; faces with
/// more than three corners are fan-triangulated and `a/b/c` corner syntax is
/// accepted.
pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::data(format!("OBJ line {}: {e}", lineno + 1)))?;
                if c.len() != 3 {
                    return Err(Error::data(format!("OBJ line {}: vertex needs 3 coordinates", lineno + 1)));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = it
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        head.parse::<i64>()
                            .ok()
                            .filter(|&i| i >= 1)
                            .map(|i| (i - 1) as u32)
                            .ok_or_else(|| Error::data(format!("OBJ line {}: bad face index {t:?}", lineno + 1)))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(Error::data(format!("OBJ line {}: face needs 3 indices", lineno + 1)));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles).map_err(|e| match e {
        Error::Parameter(m) => Error::Data(m),
        other => other,
    })
}

pub fn read_obj(path: &Path) -> Result<TriangleMesh> {
    read_parsed(path, |b| {
        let text = std::str::from_utf8(b).map_err(|_| Error::data("not UTF-8"))?;
        parse_obj(text)
    })
}

pub fn sdf_bytes(grid: &SdfGrid) -> Vec<u8> {
    let s = grid.spec();
    let mut w = Writer::new(b"SDF1");
    w.u32(s.resolution)
        .f32(s.origin.x)
        .f32(s.origin.y)
        .f32(s.origin.z)
        .f32(s.spacing)
        .f32(s.truncation)
        .f32s(grid.values());
    w.finish()
}

pub fn parse_sdf(bytes: &[u8]) -> Result<SdfGrid> {
    let mut r = Reader::new(bytes, b"SDF1", "SDF1 grid")?;
    let n = r.u32()?;
    let origin = Vec3::new(r.f32()?, r.f32()?, r.f32()?);
    let spacing = r.f32()?;
    let truncation = r.f32()?;
    let spec = GridSpec::new(n, origin, spacing, truncation).map_err(|e| Error::data(e.to_string()))?;
    let values = r.f32s(spec.len())?;
    r.finish()?;
    // values written as f32 may exceed an f32-rounded τ by an ulp; the
    // constructor re-clamps
    SdfGrid::new(spec, values)
}

pub fn write_sdf(path: &Path, grid: &SdfGrid) -> Result<()> {
    write_atomic(path, &sdf_bytes(grid))
}

pub fn read_sdf(path: &Path) -> Result<SdfGrid> {
    read_parsed(path, parse_sdf)
}
