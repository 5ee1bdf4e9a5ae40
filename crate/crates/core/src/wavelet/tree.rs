//! Diffusible wavelet tree: C0, D0 and D1 packed into a 64-channel grid over
//! the coarse lattice, D2 discarded.
//!
//! Channel layout over the `M³` coarse cells:
//!
//! | channels | content |
//! |----------|---------|
//! | 0        | C0 |
//! | 1..8     | D0 subbands 1..7 |
//! | 8..64    | D1: subband-major, then the 2×2×2 children of the coarse cell in z-y-x order |
//!
//! D1 coefficient `(x, y, z)` of subband `s` lands in channel
//! `8 + 8·s + ((z mod 2)·2 + y mod 2)·2 + x mod 2` of cell `(x/2, y/2, z/2)`.

use std::path::Path;

use super::dwt::{level_sides, Volume, WaveletDecomposition};
use super::filters::WaveletFilterPair;
use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::io::{read_parsed, write_atomic, Reader, Writer};

pub const TREE_CHANNELS: usize = 64;
pub const SUBBANDS: usize = 7;

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusibleTree {
    side: usize,
    /// Channel-major, x fastest within a channel.
    data: Vec<f64>,
}

impl DiffusibleTree {
    pub fn new(side: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != side.pow(3) * TREE_CHANNELS {
            return Err(Error::param(format!(
                "a {side}³×{TREE_CHANNELS} tree needs {} values, got {}",
                side.pow(3) * TREE_CHANNELS,
                data.len()
            )));
        }
        Ok(DiffusibleTree { side, data })
    }

    pub fn zeros(side: usize) -> Self {
        DiffusibleTree {
            side,
            data: vec![0.0; side.pow(3) * TREE_CHANNELS],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn channels(&self) -> usize {
        TREE_CHANNELS
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn cells(&self) -> usize {
        self.side.pow(3)
    }

    #[inline]
    pub fn index(&self, channel: usize, x: usize, y: usize, z: usize) -> usize {
        channel * self.cells() + (z * self.side + y) * self.side + x
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.cells();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn scaled(&self, a: f64) -> Self {
        DiffusibleTree {
            side: self.side,
            data: self.data.iter().map(|v| a * v).collect(),
        }
    }

    /// Zero-pads (or crops) every channel to `side³`, keeping the origin.
    pub fn resized(&self, side: usize) -> Self {
        let mut out = DiffusibleTree::zeros(side);
        let m = self.side.min(side);
        for c in 0..TREE_CHANNELS {
            for z in 0..m {
                for y in 0..m {
                    for x in 0..m {
                        let i = out.index(c, x, y, z);
                        out.data[i] = self.data[self.index(c, x, y, z)];
                    }
                }
            }
        }
        out
    }
}

/// Tree-space flat index of D0 coefficient `(x, y, z)` in subband `s`.
#[inline]
pub fn d0_slot(side: usize, s: usize, x: usize, y: usize, z: usize) -> usize {
    (1 + s) * side.pow(3) + (z * side + y) * side + x
}

/// Tree-space flat index of D1 coefficient `(x, y, z)` in subband `s`.
#[inline]
pub fn d1_slot(side: usize, s: usize, x: usize, y: usize, z: usize) -> usize {
    let child = ((z % 2) * 2 + y % 2) * 2 + x % 2;
    let c = 8 + 8 * s + child;
    c * side.pow(3) + ((z / 2) * side + y / 2) * side + x / 2
}

/// Everything needed to turn a bare tree back into a decomposition: the
/// source lattice, filters and per-level sides.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeGeometry {
    pub spec: GridSpec,
    pub filters: WaveletFilterPair,
    /// Lowpass sides from the input (index 0) to the coarse cube (index 3).
    pub sides: Vec<usize>,
}

impl TreeGeometry {
    pub const LEVELS: usize = 3;

    pub fn new(spec: GridSpec, filters: WaveletFilterPair) -> Result<Self> {
        let sides = level_sides(spec.resolution, &filters, Self::LEVELS)?;
        let g = TreeGeometry { spec, filters, sides };
        if g.d1_side() > 2 * g.coarse_side() {
            return Err(Error::param("D1 does not fit under the coarse lattice"));
        }
        Ok(g)
    }

    pub fn coarse_side(&self) -> usize {
        self.sides[3]
    }

    pub fn d0_side(&self) -> usize {
        self.sides[3]
    }

    pub fn d1_side(&self) -> usize {
        self.sides[2]
    }

    pub fn d2_side(&self) -> usize {
        self.sides[1]
    }
}

/// Packs C0, D0 and D1 of a decomposition with at least three levels.
pub fn pack_tree(decomp: &WaveletDecomposition) -> Result<DiffusibleTree> {
    if decomp.levels() < 3 {
        return Err(Error::param(format!(
            "packing needs at least 3 decomposition levels, got {}",
            decomp.levels()
        )));
    }
    let m = decomp.coarse.side();
    let d1 = &decomp.details[1];
    let d1_side = d1[0].side();
    if d1_side > 2 * m || decomp.details[0][0].side() != m {
        return Err(Error::param("decomposition levels do not nest under the coarse lattice"));
    }
    let mut tree = DiffusibleTree::zeros(m);
    tree.data[..m.pow(3)].copy_from_slice(&decomp.coarse.data);
    for s in 0..SUBBANDS {
        let n = m.pow(3);
        tree.data[(1 + s) * n..(2 + s) * n].copy_from_slice(&decomp.details[0][s].data);
        for z in 0..d1_side {
            for y in 0..d1_side {
                for x in 0..d1_side {
                    tree.data[d1_slot(m, s, x, y, z)] = d1[s].get(x, y, z);
                }
            }
        }
    }
    Ok(tree)
}

/// Inverse of [`pack_tree`]; D2 comes back zero-filled.
pub fn unpack_tree(tree: &DiffusibleTree, geometry: &TreeGeometry) -> Result<WaveletDecomposition> {
    if tree.channels() != TREE_CHANNELS {
        return Err(Error::param("diffusible trees carry exactly 64 channels"));
    }
    if tree.side() != geometry.coarse_side() {
        return Err(Error::param(format!(
            "tree side {} does not match the coarse side {} of a {}³ {} grid",
            tree.side(),
            geometry.coarse_side(),
            geometry.spec.resolution,
            geometry.filters.family
        )));
    }
    let mut d = WaveletDecomposition::zeros(geometry.spec.clone(), geometry.filters.clone(), TreeGeometry::LEVELS)?;
    let m = tree.side();
    let n = m.pow(3);
    d.coarse.data.copy_from_slice(&tree.data[..n]);
    let d1_side = geometry.d1_side();
    for s in 0..SUBBANDS {
        d.details[0][s].data.copy_from_slice(&tree.data[(1 + s) * n..(2 + s) * n]);
        let band: &mut Volume = &mut d.details[1][s];
        for z in 0..d1_side {
            for y in 0..d1_side {
                for x in 0..d1_side {
                    let i = band.index(x, y, z);
                    band.data[i] = tree.data[d1_slot(m, s, x, y, z)];
                }
            }
        }
    }
    Ok(d)
}

/// `WTR1` layout, little-endian: magic, `u32` side M, `u32` channels (64),
/// then `f32` data channel-major with x fastest.
pub fn tree_bytes(tree: &DiffusibleTree) -> Vec<u8> {
    let mut w = Writer::new(b"WTR1");
    w.u32(tree.side).u32(TREE_CHANNELS).f32s(&tree.data);
    w.finish()
}

pub fn parse_tree(bytes: &[u8]) -> Result<DiffusibleTree> {
    let mut r = Reader::new(bytes, b"WTR1", "WTR1 tree")?;
    let side = r.u32()?;
    let channels = r.u32()?;
    if channels != TREE_CHANNELS {
        return Err(Error::data(format!("WTR1 tree: expected 64 channels, found {channels}")));
    }
    let data = r.f32s(side.pow(3) * TREE_CHANNELS)?;
    r.finish()?;
    DiffusibleTree::new(side, data)
}

pub fn write_tree(path: &Path, tree: &DiffusibleTree) -> Result<()> {
    write_atomic(path, &tree_bytes(tree))
}

pub fn read_tree(path: &Path) -> Result<DiffusibleTree> {
    read_parsed(path, parse_tree)
}
