//! Vector quantization of latent cells against a k-means codebook.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use super::latent::LatentGrid;
use crate::error::{Error, Result};
use crate::io::{read_parsed, write_atomic, Reader, Writer};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    dim: usize,
    /// `K × d`, row-major.
    entries: Vec<f64>,
    /// Training vectors assigned to each entry in the last fitting pass.
    pub usage_counts: Vec<u64>,
}

impl Codebook {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 || entries.is_empty() || !entries.len().is_multiple_of(dim) {
            return Err(Error::param("a codebook needs at least one entry of positive dimension"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("codebook contains non-finite entries"));
        }
        let k = entries.len() / dim;
        Ok(Codebook { dim, entries, usage_counts: vec![0; k] })
    }

    pub fn len(&self) -> usize {
        self.entries.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, k: usize) -> &[f64] {
        &self.entries[k * self.dim..(k + 1) * self.dim]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Nearest entry by Euclidean distance; ties go to the lowest index.
    pub fn nearest(&self, v: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for k in 0..self.len() {
            let d2 = sq_dist(v, self.entry(k));
            if d2 < best.1 {
                best = (k, d2);
            }
        }
        best
    }

    /// Smallest distance between two distinct entries.
    pub fn min_gap(&self) -> f64 {
        let mut g = f64::INFINITY;
        for a in 0..self.len() {
            for b in a + 1..self.len() {
                g = g.min(sq_dist(self.entry(a), self.entry(b)));
            }
        }
        g.sqrt()
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Outcome of a k-means fit.
#[derive(Clone, Debug)]
pub struct CodebookFit {
    pub codebook: Codebook,
    /// Total squared quantization error measured at the start of every
    /// Lloyd iteration, then once more after the last update.
    pub error_history: Vec<f64>,
}

/// k-means++ seeding followed by `iters` Lloyd iterations over the rows of
/// `vectors` (`n × d`, row-major).
pub fn fit_codebook(vectors: &[f64], dim: usize, k: usize, iters: usize, seed: u64) -> Result<CodebookFit> {
    if k == 0 || dim == 0 {
        return Err(Error::param("codebook size and dimension must be positive"));
    }
    if vectors.is_empty() || !vectors.len().is_multiple_of(dim) {
        return Err(Error::fit("no training vectors for the codebook"));
    }
    let n = vectors.len() / dim;
    let mut rng = rng::rng(seed);
    let row = |i: usize| &vectors[i * dim..(i + 1) * dim];

    let mut entries = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    entries.extend_from_slice(row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    pick = i;
                    break;
                }
            }
            if d2[pick] == 0.0 {
                pick = (0..n).rev().find(|&i| d2[i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            first
        };
        entries.extend_from_slice(row(pick));
        let e = row(pick);
        d2.iter_mut().enumerate().for_each(|(i, d)| *d = d.min(sq_dist(row(i), e)));
    }
    let book = Codebook::new(dim, entries)?;
    lloyd(vectors, book, iters)
}

/// Lloyd iterations from an existing codebook.
pub fn lloyd(vectors: &[f64], mut book: Codebook, iters: usize) -> Result<CodebookFit> {
    let dim = book.dim;
    if vectors.is_empty() || !vectors.len().is_multiple_of(dim) {
        return Err(Error::fit("no training vectors for the codebook"));
    }
    let n = vectors.len() / dim;
    let k = book.len();
    let mut history = Vec::with_capacity(iters + 1);
    let assign = |book: &Codebook| -> Vec<(usize, f64)> {
        (0..n).into_par_iter().map(|i| book.nearest(&vectors[i * dim..(i + 1) * dim])).collect()
    };
    let mut assignment = assign(&book);
    for _ in 0..iters {
        history.push(assignment.iter().map(|a| a.1).sum());
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0u64; k];
        for (i, &(c, _)) in assignment.iter().enumerate() {
            counts[c] += 1;
            for j in 0..dim {
                sums[c * dim + j] += vectors[i * dim + j];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..dim {
                    book.entries[c * dim + j] = sums[c * dim + j] / counts[c] as f64;
                }
            }
        }
        // empty clusters move onto the currently worst-served vectors
        let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empty.is_empty() {
            let fresh = assign(&book);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| fresh[b].1.total_cmp(&fresh[a].1).then(a.cmp(&b)));
            for (c, &i) in empty.iter().zip(&order) {
                if fresh[i].1 > 0.0 {
                    book.entries[c * dim..(c + 1) * dim].copy_from_slice(&vectors[i * dim..(i + 1) * dim]);
                }
            }
        }
        assignment = assign(&book);
    }
    history.push(assignment.iter().map(|a| a.1).sum());
    let mut usage = vec![0u64; k];
    for &(c, _) in &assignment {
        usage[c] += 1;
    }
    book.usage_counts = usage;
    Ok(CodebookFit { codebook: book, error_history: history })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedLatent {
    pub side: usize,
    pub indices: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VqLosses {
    /// Mean over cells of ‖sg(z) − e‖².
    pub codebook_loss: f64,
    /// Mean over cells of ‖z − sg(e)‖².
    pub commitment_loss: f64,
}

pub fn quantize(latent: &LatentGrid, codebook: &Codebook) -> Result<(QuantizedLatent, VqLosses)> {
    if latent.dim() != codebook.dim {
        return Err(Error::param(format!(
            "latent dimension {} does not match codebook dimension {}",
            latent.dim(),
            codebook.dim
        )));
    }
    let hits: Vec<(usize, f64)> = (0..latent.cell_count())
        .into_par_iter()
        .map(|i| codebook.nearest(latent.cell(i)))
        .collect();
    let mean = hits.iter().map(|h| h.1).sum::<f64>() / hits.len() as f64;
    let q = QuantizedLatent {
        side: latent.side(),
        indices: hits.iter().map(|h| h.0 as u32).collect(),
    };
    Ok((q, VqLosses { codebook_loss: mean, commitment_loss: mean }))
}

pub fn dequantize(q: &QuantizedLatent, codebook: &Codebook) -> Result<LatentGrid> {
    let k = codebook.len();
    let mut cells = Vec::with_capacity(q.indices.len() * codebook.dim);
    for &i in &q.indices {
        if i as usize >= k {
            return Err(Error::data(format!("code index {i} outside a {k}-entry codebook")));
        }
        cells.extend_from_slice(codebook.entry(i as usize));
    }
    LatentGrid::new(q.side, codebook.dim, cells)
}

/// Nearest-entry projection of every cell.
pub fn snap(latent: &LatentGrid, codebook: &Codebook) -> Result<LatentGrid> {
    dequantize(&quantize(latent, codebook)?.0, codebook)
}

/// `CB01` layout, little-endian: magic, `u32` K, `u32` d, then `K × d` `f32`
/// entries row-major.
pub fn codebook_bytes(book: &Codebook) -> Vec<u8> {
    let mut w = Writer::new(b"CB01");
    w.u32(book.len()).u32(book.dim).f32s(&book.entries);
    w.finish()
}

pub fn parse_codebook(bytes: &[u8]) -> Result<Codebook> {
    let mut r = Reader::new(bytes, b"CB01", "CB01 codebook")?;
    let k = r.u32()?;
    let d = r.u32()?;
    if k == 0 || d == 0 {
        return Err(Error::data("CB01 codebook: zero size or dimension"));
    }
    let entries = r.f32s(k * d)?;
    r.finish()?;
    Codebook::new(d, entries)
}

pub fn write_codebook(path: &Path, book: &Codebook) -> Result<()> {
    write_atomic(path, &codebook_bytes(book))
}

pub fn read_codebook(path: &Path) -> Result<Codebook> {
    read_parsed(path, parse_codebook)
}
