use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::io::{read_parsed, write_atomic, Reader, Writer};

/// Continuous latent: `S³` cells of dimension `d`, cells in x-fastest order
/// with the `d` components of a cell stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGrid {
    side: usize,
    dim: usize,
    cells: Vec<f64>,
}

impl LatentGrid {
    pub fn new(side: usize, dim: usize, cells: Vec<f64>) -> Result<Self> {
        if side == 0 || dim == 0 {
            return Err(Error::param("latent side and dimension must be positive"));
        }
        if cells.len() != side.pow(3) * dim {
            return Err(Error::param(format!(
                "a {side}³×{dim} latent needs {} values, got {}",
                side.pow(3) * dim,
                cells.len()
            )));
        }
        if cells.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("latent contains non-finite values"));
        }
        Ok(LatentGrid { side, dim, cells })
    }

    pub fn zeros(side: usize, dim: usize) -> Self {
        LatentGrid { side, dim, cells: vec![0.0; side.pow(3) * dim] }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cell_count(&self) -> usize {
        self.side.pow(3)
    }

    /// Total scalar count `S³·d`.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.cells
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.cells
    }

    pub fn into_values(self) -> Vec<f64> {
        self.cells
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        &self.cells[i * self.dim..(i + 1) * self.dim]
    }

    pub fn same_shape(&self, other: &LatentGrid) -> bool {
        self.side == other.side && self.dim == other.dim
    }

    pub(crate) fn check_same_shape(&self, other: &LatentGrid) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::param(format!(
                "latent shapes differ: {}³×{} vs {}³×{}",
                self.side, self.dim, other.side, other.dim
            )))
        }
    }
}

/// `N³ / (S³·d)`: input voxels per latent scalar.
pub fn compression_ratio(spec: &GridSpec, latent: &LatentGrid) -> f64 {
    spec.resolution.pow(3) as f64 / latent.len() as f64
}

/// `LAT1` layout, little-endian: magic, `u32` S, `u32` d, then `S³·d` `f32`
/// values, cells x-fastest and the components of each cell contiguous.
pub fn latent_bytes(latent: &LatentGrid) -> Vec<u8> {
    let mut w = Writer::new(b"LAT1");
    w.u32(latent.side).u32(latent.dim).f32s(&latent.cells);
    w.finish()
}

pub fn parse_latent(bytes: &[u8]) -> Result<LatentGrid> {
    let mut r = Reader::new(bytes, b"LAT1", "LAT1 latent")?;
    let side = r.u32()?;
    let dim = r.u32()?;
    if side == 0 || dim == 0 {
        return Err(Error::data("LAT1 latent: zero side or dimension"));
    }
    let cells = r.f32s(side.pow(3) * dim)?;
    r.finish()?;
    LatentGrid::new(side, dim, cells)
}

pub fn write_latent(path: &Path, latent: &LatentGrid) -> Result<()> {
    write_atomic(path, &latent_bytes(latent))
}

pub fn read_latent(path: &Path) -> Result<LatentGrid> {
    read_parsed(path, parse_latent)
}
