//! Per-block weighted linear codec.
//!
//! A tree is zero-padded to a multiple of the block side `b` and cut into
//! `b³`-cell blocks. Each block flattens to a vector of `p = 64·b³` values,
//! index `c·b³ + (lz·b + ly)·b + lx`. With per-coordinate weights `w`, the
//! codec is the rank-`d` principal subspace `U` of the weighted vectors
//! `√w ⊙ x`:
//!
//! ```text
//! encode: z = Uᵀ·diag(√w)·x        decode: x̂ = diag(1/√w)·U·z
//! ```
//!
//! which minimizes `Σ ‖√w ⊙ (x − x̂)‖²` over all rank-`d` linear codecs.

use std::path::Path;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::diag::Diag;
use faer::{Mat, Par};
use nalgebra::{DMatrix, DMatrixView};

use super::latent::LatentGrid;
use crate::error::{Error, Result};
use crate::io::{read_parsed, write_atomic, Reader, Writer};
use crate::wavelet::{DiffusibleTree, ImportanceSet, TREE_CHANNELS};

/// Side of the padded tree that `b` tiles.
pub fn padded_side(side: usize, block: usize) -> usize {
    side.div_ceil(block) * block
}

/// Per-coordinate loss weights over one flattened block.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientWeights {
    block: usize,
    values: Vec<f64>,
}

impl CoefficientWeights {
    pub fn uniform(block: usize) -> Self {
        CoefficientWeights {
            block,
            values: vec![1.0; block_len(block)],
        }
    }

    pub fn new(block: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != block_len(block) {
            return Err(Error::param(format!(
                "block side {block} needs {} weights, got {}",
                block_len(block),
                values.len()
            )));
        }
        if values.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::param("weights must be finite and positive"));
        }
        Ok(CoefficientWeights { block, values })
    }

    /// Expected per-coordinate weights of the adaptive reconstruction loss,
    /// averaged over trees and block positions.
    ///
    /// Within one tree a C0 cell carries `1/|C0|`, an important detail
    /// coefficient `1/(2|P0|)` and an unimportant one `1/(2|P0′|)` (the
    /// sampled term picks it with probability `|P0|/|P0′|`). Slots that hold
    /// no coefficient get the smallest positive weight. The result is scaled
    /// to mean 1.
    pub fn adaptive(trees: &[DiffusibleTree], sets: &[ImportanceSet], block: usize) -> Result<Self> {
        if trees.is_empty() || trees.len() != sets.len() {
            return Err(Error::fit("adaptive weights need one importance set per tree"));
        }
        let p = block_len(block);
        let b3 = block.pow(3);
        let mut acc = vec![0.0; p];
        let mut count = 0usize;
        for (tree, set) in trees.iter().zip(sets) {
            let m = tree.side();
            let n = m.pow(3);
            let mut w = vec![0.0; n * TREE_CHANNELS];
            w[..n].iter_mut().for_each(|v| *v = 1.0 / n as f64);
            for level in 0..2 {
                let (p0, rest) = set.tree_slots(level, m);
                for (slots, k) in [(&p0, p0.len()), (&rest, rest.len())] {
                    for &s in slots {
                        w[s] = 0.5 / k as f64;
                    }
                }
            }
            let padded = padded_side(m, block);
            let s = padded / block;
            for bz in 0..s {
                for by in 0..s {
                    for bx in 0..s {
                        for c in 0..TREE_CHANNELS {
                            for lz in 0..block {
                                for ly in 0..block {
                                    for lx in 0..block {
                                        let (x, y, z) = (bx * block + lx, by * block + ly, bz * block + lz);
                                        if x < m && y < m && z < m {
                                            let i = c * b3 + (lz * block + ly) * block + lx;
                                            acc[i] += w[c * n + (z * m + y) * m + x];
                                        }
                                    }
                                }
                            }
                        }
                        count += 1;
                    }
                }
            }
        }
        let mut values: Vec<f64> = acc.iter().map(|a| a / count as f64).collect();
        let floor = values.iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
        if !floor.is_finite() {
            return Err(Error::fit("adaptive weights are all zero"));
        }
        values.iter_mut().for_each(|v| *v = v.max(floor));
        let mean = values.iter().sum::<f64>() / p as f64;
        values.iter_mut().for_each(|v| *v /= mean);
        Ok(CoefficientWeights { block, values })
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_uniform(&self) -> bool {
        self.values.iter().all(|&v| v == self.values[0])
    }
}

fn block_len(block: usize) -> usize {
    TREE_CHANNELS * block.pow(3)
}

/// How a codec was fitted. Not serialized.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitMeta {
    pub weighted: bool,
    pub rho: Option<f64>,
    pub training_blocks: usize,
    /// Leading eigenvalues of the weighted second-moment matrix.
    pub eigenvalues: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearCodec {
    block: usize,
    latent_dim: usize,
    /// `p × d`, row-major: `z_k = Σ_i x_i · enc[i][k]`.
    enc: Vec<f64>,
    /// `d × p`, row-major: `x̂_i = Σ_k z_k · dec[k][i]`.
    dec: Vec<f64>,
    pub meta: FitMeta,
}

impl LinearCodec {
    pub fn new(block: usize, latent_dim: usize, enc: Vec<f64>, dec: Vec<f64>) -> Result<Self> {
        let p = block_len(block);
        if block == 0 || latent_dim == 0 || latent_dim > p {
            return Err(Error::param(format!(
                "latent dimension must lie in 1..={p} for block side {block}"
            )));
        }
        if enc.len() != p * latent_dim || dec.len() != p * latent_dim {
            return Err(Error::param("codec matrices have the wrong size"));
        }
        Ok(LinearCodec { block, latent_dim, enc, dec, meta: FitMeta::default() })
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn block_len(&self) -> usize {
        block_len(self.block)
    }

    pub fn enc_matrix(&self) -> &[f64] {
        &self.enc
    }

    pub fn dec_matrix(&self) -> &[f64] {
        &self.dec
    }

    /// Orthonormal basis `U` (p × d, column-major) in weighted coordinates,
    /// recovered from the stored maps.
    fn basis(&self, weights: &CoefficientWeights) -> DMatrix<f64> {
        let (p, d) = (self.block_len(), self.latent_dim);
        DMatrix::from_fn(p, d, |i, k| self.enc[i * d + k] / weights.values[i].sqrt())
    }

    fn from_basis(u: &DMatrix<f64>, weights: &CoefficientWeights, meta: FitMeta) -> Self {
        let (p, d) = u.shape();
        let mut enc = vec![0.0; p * d];
        let mut dec = vec![0.0; p * d];
        for i in 0..p {
            let s = weights.values[i].sqrt();
            for k in 0..d {
                enc[i * d + k] = s * u[(i, k)];
                dec[k * p + i] = u[(i, k)] / s;
            }
        }
        LinearCodec { block: weights.block, latent_dim: d, enc, dec, meta }
    }
}

/// Flattened blocks of a tree padded to a multiple of `block`.
pub fn tree_blocks(tree: &DiffusibleTree, block: usize) -> Vec<Vec<f64>> {
    let m = tree.side();
    let s = padded_side(m, block) / block;
    let b3 = block.pow(3);
    let data = tree.data();
    let n = m.pow(3);
    (0..s.pow(3))
        .map(|bi| {
            let (bx, by, bz) = (bi % s, (bi / s) % s, bi / (s * s));
            let mut v = vec![0.0; TREE_CHANNELS * b3];
            for c in 0..TREE_CHANNELS {
                for lz in 0..block {
                    let z = bz * block + lz;
                    if z >= m {
                        continue;
                    }
                    for ly in 0..block {
                        let y = by * block + ly;
                        if y >= m {
                            continue;
                        }
                        for lx in 0..block {
                            let x = bx * block + lx;
                            if x < m {
                                v[c * b3 + (lz * block + ly) * block + lx] = data[c * n + (z * m + y) * m + x];
                            }
                        }
                    }
                }
            }
            v
        })
        .collect()
}

/// Reassembles blocks into a tree of side `side·block`.
fn tree_from_blocks(blocks: &[Vec<f64>], s: usize, block: usize) -> DiffusibleTree {
    let m = s * block;
    let n = m.pow(3);
    let b3 = block.pow(3);
    let mut tree = DiffusibleTree::zeros(m);
    let data = tree.data_mut();
    for (bi, v) in blocks.iter().enumerate() {
        let (bx, by, bz) = (bi % s, (bi / s) % s, bi / (s * s));
        for c in 0..TREE_CHANNELS {
            for lz in 0..block {
                for ly in 0..block {
                    for lx in 0..block {
                        let (x, y, z) = (bx * block + lx, by * block + ly, bz * block + lz);
                        data[c * n + (z * m + y) * m + x] = v[c * b3 + (lz * block + ly) * block + lx];
                    }
                }
            }
        }
    }
    tree
}

fn check_block(trees: &[DiffusibleTree], block: usize) -> Result<()> {
    if block == 0 {
        return Err(Error::param("block side must be positive"));
    }
    if let Some(t) = trees.iter().find(|t| t.side() != trees[0].side()) {
        return Err(Error::param(format!(
            "training trees differ in side: {} vs {}",
            trees[0].side(),
            t.side()
        )));
    }
    Ok(())
}

/// Weighted principal subspace of the training blocks.
///
/// Eigenvectors come out in order of decreasing eigenvalue, each signed so
/// that its largest-magnitude component is positive.
pub fn fit_codec(
    trees: &[DiffusibleTree],
    block: usize,
    latent_dim: usize,
    weights: &CoefficientWeights,
) -> Result<LinearCodec> {
    check_block(trees, block)?;
    if weights.block != block {
        return Err(Error::param(format!(
            "weights were built for block side {}, codec uses {block}",
            weights.block
        )));
    }
    let p = block_len(block);
    if latent_dim == 0 || latent_dim > p {
        return Err(Error::param(format!("latent dimension must lie in 1..={p}")));
    }
    let sw: Vec<f64> = weights.values.iter().map(|w| w.sqrt()).collect();
    let blocks: Vec<Vec<f64>> = trees
        .iter()
        .flat_map(|t| tree_blocks(t, block))
        .map(|mut v| {
            v.iter_mut().zip(&sw).for_each(|(x, s)| *x *= s);
            v
        })
        .collect();
    let n = blocks.len();
    if n == 0 {
        return Err(Error::fit("no training blocks"));
    }
    let (u, eigenvalues) = if latent_dim <= n && latent_dim < p && n < p {
        gram_subspace(&blocks, latent_dim)?
    } else {
        covariance_subspace(&blocks, p, latent_dim)?
    };
    let meta = FitMeta {
        weighted: !weights.is_uniform(),
        rho: None,
        training_blocks: n,
        eigenvalues,
    };
    Ok(LinearCodec::from_basis(&u, weights, meta))
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
fn sorted_eigen(m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let a = Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    drop(m);
    let mut s = Diag::<f64>::zeros(n);
    let mut u = Mat::<f64>::zeros(n, n);
    let scratch = evd::self_adjoint_evd_scratch::<f64>(n, ComputeEigenvectors::Yes, Par::Seq, Default::default());
    let mut buf = MemBuffer::new(scratch);
    evd::self_adjoint_evd(a.as_ref(), s.as_mut(), Some(u.as_mut()), Par::Seq, MemStack::new(&mut buf), Default::default())
        .map_err(|e| Error::fit(format!("eigendecomposition failed: {e:?}")))?;
    let vals: Vec<f64> = (0..n).rev().map(|i| s[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| u[(r, n - 1 - c)]);
    Ok((vals, vecs))
}

fn normalize_signs(u: &mut DMatrix<f64>) {
    for mut col in u.column_iter_mut() {
        let lead = col.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if lead < 0.0 {
            col.neg_mut();
        }
    }
}

fn covariance_subspace(blocks: &[Vec<f64>], p: usize, d: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mut cov = DMatrix::<f64>::zeros(p, p);
    for chunk in blocks.chunks(512) {
        let y = DMatrix::from_fn(p, chunk.len(), |i, j| chunk[j][i]);
        cov.gemm(1.0, &y, &y.transpose(), 1.0);
    }
    let (vals, vecs) = sorted_eigen(cov)?;
    let mut u = vecs.columns(0, d).into_owned();
    normalize_signs(&mut u);
    Ok((u, vals[..d].to_vec()))
}

fn gram_subspace(blocks: &[Vec<f64>], d: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = blocks.len();
    let p = blocks[0].len();
    let y = DMatrix::from_fn(p, n, |i, j| blocks[j][i]);
    let gram = y.transpose() * &y;
    let (vals, vecs) = sorted_eigen(gram)?;
    let top = vals[0].max(0.0);
    if vals[d - 1] <= top * 1e-12 {
        return Err(Error::fit(format!(
            "training blocks span fewer than {d} dimensions"
        )));
    }
    let mut u = &y * vecs.columns(0, d);
    for (k, mut col) in u.column_iter_mut().enumerate() {
        col /= vals[k].sqrt();
    }
    normalize_signs(&mut u);
    Ok((u, vals[..d].to_vec()))
}

/// Per-block projection of the zero-padded tree.
pub fn encode(codec: &LinearCodec, tree: &DiffusibleTree) -> Result<LatentGrid> {
    let b = codec.block;
    let s = padded_side(tree.side(), b) / b;
    let d = codec.latent_dim;
    let p = codec.block_len();
    let blocks: Vec<f64> = tree_blocks(tree, b).concat();
    let n = blocks.len() / p;
    let enc_t = DMatrixView::from_slice(&codec.enc, d, p);
    let cells = enc_t * DMatrixView::from_slice(&blocks, p, n);
    let cells = cells.data.into();
    LatentGrid::new(s, d, cells)
}

/// Inverse-shaped map: a latent of side `S` decodes to a tree of side `S·b`.
pub fn decode(codec: &LinearCodec, latent: &LatentGrid) -> Result<DiffusibleTree> {
    if latent.dim() != codec.latent_dim {
        return Err(Error::param(format!(
            "latent dimension {} does not match codec dimension {}",
            latent.dim(),
            codec.latent_dim
        )));
    }
    let (p, d, n) = (codec.block_len(), codec.latent_dim, latent.cell_count());
    let dec = DMatrixView::from_slice(&codec.dec, p, d);
    let flat = dec * DMatrixView::from_slice(latent.values(), d, n);
    let blocks: Vec<Vec<f64>> = flat.as_slice().chunks(p).map(<[f64]>::to_vec).collect();
    Ok(tree_from_blocks(&blocks, latent.side(), codec.block))
}

/// Refits on `trees` and rotates the new basis onto `previous` so that
/// latents stay comparable with an existing codebook.
pub(crate) fn refit_aligned(
    previous: &LinearCodec,
    trees: &[DiffusibleTree],
    weights: &CoefficientWeights,
) -> Result<LinearCodec> {
    let mut fresh = fit_codec(trees, previous.block, previous.latent_dim, weights)?;
    let u_old = previous.basis(weights);
    let u_new = fresh.basis(weights);
    let m = u_new.transpose() * &u_old;
    let svd = m.svd(true, true);
    let (Some(a), Some(bt)) = (svd.u, svd.v_t) else {
        return Err(Error::fit("alignment SVD failed"));
    };
    let r = a * bt;
    let meta = std::mem::take(&mut fresh.meta);
    Ok(LinearCodec::from_basis(&(u_new * r), weights, meta))
}

/// `LC01` layout, little-endian: magic, `u32` b, `u32` d, then the
/// `(64·b³) × d` encoder and the `d × (64·b³)` decoder, both `f32` row-major.
pub fn codec_bytes(codec: &LinearCodec) -> Vec<u8> {
    let mut w = Writer::new(b"LC01");
    w.u32(codec.block).u32(codec.latent_dim).f32s(&codec.enc).f32s(&codec.dec);
    w.finish()
}

pub fn parse_codec(bytes: &[u8]) -> Result<LinearCodec> {
    let mut r = Reader::new(bytes, b"LC01", "LC01 codec")?;
    let b = r.u32()?;
    let d = r.u32()?;
    let p = block_len(b);
    if b == 0 || d == 0 || d > p {
        return Err(Error::data(format!("LC01 codec: invalid block {b} / dimension {d}")));
    }
    let enc = r.f32s(p * d)?;
    let dec = r.f32s(p * d)?;
    r.finish()?;
    LinearCodec::new(b, d, enc, dec)
}

pub fn write_codec(path: &Path, codec: &LinearCodec) -> Result<()> {
    write_atomic(path, &codec_bytes(codec))
}

pub fn read_codec(path: &Path) -> Result<LinearCodec> {
    read_parsed(path, parse_codec)
}
