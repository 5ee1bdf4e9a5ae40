//! Per-subband importance sets over D0 and D1 and the parent-child filter
//! built on them.

use super::dwt::{Volume, WaveletDecomposition};
use super::tree::{d0_slot, d1_slot, DiffusibleTree, SUBBANDS};
use crate::error::{Error, Result};

pub const DEFAULT_RHO: f64 = 1.0 / 32.0;

/// Important coordinates of one detail level: for every subband, the sorted
/// flat indices (x fastest) whose magnitude reaches the threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelImportance {
    pub side: usize,
    pub subbands: [Vec<usize>; SUBBANDS],
}

impl LevelImportance {
    fn of(bands: &[Volume; SUBBANDS], rho: f64) -> Self {
        let side = bands[0].side();
        let subbands = std::array::from_fn(|s| threshold(&bands[s].data, rho));
        LevelImportance { side, subbands }
    }

    pub fn len(&self) -> usize {
        self.subbands.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates per subband, `side³`.
    pub fn subband_len(&self) -> usize {
        self.side.pow(3)
    }

    pub fn complement_len(&self) -> usize {
        SUBBANDS * self.subband_len() - self.len()
    }

    /// Boolean mask per subband.
    pub fn masks(&self) -> [Vec<bool>; SUBBANDS] {
        std::array::from_fn(|s| {
            let mut m = vec![false; self.subband_len()];
            for &i in &self.subbands[s] {
                m[i] = true;
            }
            m
        })
    }
}

type SlotFn = fn(usize, usize, usize, usize, usize) -> usize;

/// P0 for D0 and D1 at threshold ratio ρ; P0′ is everything else in the
/// same subbands.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceSet {
    pub rho: f64,
    pub d0: LevelImportance,
    pub d1: LevelImportance,
}

/// Indices with `|v| ≥ ρ·max|v|`; empty when the slice is all zero.
pub fn threshold(values: &[f64], rho: f64) -> Vec<usize> {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Vec::new();
    }
    let cut = rho * max;
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() >= cut)
        .map(|(i, _)| i)
        .collect()
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("threshold ratio must lie in (0, 1), got {rho}")))
    }
}

pub fn importance_set(decomp: &WaveletDecomposition, rho: f64) -> Result<ImportanceSet> {
    check_rho(rho)?;
    if decomp.levels() < 2 {
        return Err(Error::param("importance sets need D0 and D1"));
    }
    Ok(ImportanceSet {
        rho,
        d0: LevelImportance::of(&decomp.details[0], rho),
        d1: LevelImportance::of(&decomp.details[1], rho),
    })
}

/// Importance set read straight off a packed tree whose D1 bands have side
/// `d1_side`.
pub fn importance_set_tree(tree: &DiffusibleTree, d1_side: usize, rho: f64) -> Result<ImportanceSet> {
    check_rho(rho)?;
    let m = tree.side();
    if d1_side > 2 * m {
        return Err(Error::param(format!("D1 side {d1_side} does not fit under a {m}³ tree")));
    }
    let data = tree.data();
    let gather = |side: usize, slot: fn(usize, usize, usize, usize, usize) -> usize| LevelImportance {
        side,
        subbands: std::array::from_fn(|s| {
            let v: Vec<f64> = (0..side.pow(3))
                .map(|i| data[slot(m, s, i % side, (i / side) % side, i / (side * side))])
                .collect();
            threshold(&v, rho)
        }),
    };
    Ok(ImportanceSet { rho, d0: gather(m, d0_slot), d1: gather(d1_side, d1_slot) })
}

impl ImportanceSet {
    /// Same set with every coordinate marked important.
    pub fn everything(d0_side: usize, d1_side: usize) -> Self {
        let all = |side: usize| LevelImportance {
            side,
            subbands: std::array::from_fn(|_| (0..side.pow(3)).collect()),
        };
        ImportanceSet { rho: 0.0, d0: all(d0_side), d1: all(d1_side) }
    }

    pub fn nothing(d0_side: usize, d1_side: usize) -> Self {
        let none = |side: usize| LevelImportance { side, subbands: Default::default() };
        ImportanceSet { rho: 1.0, d0: none(d0_side), d1: none(d1_side) }
    }

    /// Tree flat indices of P0 and P0′ for one level (0 = D0, 1 = D1), in
    /// subband-major order.
    pub fn tree_slots(&self, level: usize, tree_side: usize) -> (Vec<usize>, Vec<usize>) {
        let (imp, slot): (&LevelImportance, SlotFn) = match level {
            0 => (&self.d0, d0_slot),
            _ => (&self.d1, d1_slot),
        };
        let side = imp.side;
        let mut p0 = Vec::with_capacity(imp.len());
        let mut rest = Vec::with_capacity(imp.complement_len());
        for (s, mask) in imp.masks().iter().enumerate() {
            for (i, &keep) in mask.iter().enumerate() {
                let (x, y, z) = (i % side, (i / side) % side, i / (side * side));
                let t = slot(tree_side, s, x, y, z);
                if keep { p0.push(t) } else { rest.push(t) }
            }
        }
        (p0, rest)
    }
}

/// Zeros D0 outside P0 and every D1 coefficient whose D0 parent was zeroed.
/// C0 and deeper levels pass through.
pub fn subband_filter(decomp: &WaveletDecomposition, keep: &ImportanceSet) -> Result<WaveletDecomposition> {
    if decomp.levels() < 2
        || decomp.details[0][0].side() != keep.d0.side
        || decomp.details[1][0].side() != keep.d1.side
    {
        return Err(Error::param("importance set does not match the decomposition shape"));
    }
    let mut out = decomp.clone();
    let m = keep.d0.side;
    let masks = keep.d0.masks();
    for s in 0..SUBBANDS {
        for (v, &k) in out.details[0][s].data.iter_mut().zip(&masks[s]) {
            if !k {
                *v = 0.0;
            }
        }
        let d1 = &mut out.details[1][s];
        let n1 = d1.side();
        for z in 0..n1 {
            for y in 0..n1 {
                for x in 0..n1 {
                    let parent = ((z / 2) * m + y / 2) * m + x / 2;
                    if !masks[s][parent] {
                        let i = d1.index(x, y, z);
                        d1.data[i] = 0.0;
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sdf_from_shape, GridSpec, ShapeSpec};
    use crate::wavelet::{dwt3, idwt3_values, WaveletFilterPair};

    #[test]
    fn threshold_arithmetic() {
        assert_eq!(threshold(&[10.0, 1.0, 0.5], 0.04), vec![0, 1, 2]);
        assert_eq!(threshold(&[10.0, 0.3], 0.04), vec![0]);
        assert_eq!(threshold(&[-10.0, 0.4], 0.04), vec![0, 1]);
        assert!(threshold(&[0.0; 5], 0.5).is_empty());
    }

    #[test]
    fn tiny_rho_keeps_every_nonzero() {
        let v = [0.0, 1e-9, -3.0, 0.0, 2.0];
        assert_eq!(threshold(&v, 1e-12), vec![1, 2, 4]);
    }

    #[test]
    fn rho_outside_unit_interval_is_rejected() {
        let spec = GridSpec::unit_cube(16).unwrap();
        let g = sdf_from_shape(&ShapeSpec::Sphere { center: [0.0; 3], radius: 0.3 }, &spec).unwrap();
        let d = dwt3(&g, &WaveletFilterPair::haar(), 3).unwrap();
        assert!(importance_set(&d, 0.0).is_err());
        assert!(importance_set(&d, 1.0).is_err());
    }

    fn sphere_decomp() -> WaveletDecomposition {
        let spec = GridSpec::unit_cube(32).unwrap();
        let g = sdf_from_shape(&ShapeSpec::Sphere { center: [0.02, 0.0, -0.03], radius: 0.3 }, &spec).unwrap();
        dwt3(&g, &WaveletFilterPair::cdf97(), 3).unwrap()
    }

    #[test]
    fn keep_everything_and_nothing() {
        let d = sphere_decomp();
        let (a, b) = (d.details[0][0].side(), d.details[1][0].side());
        assert_eq!(subband_filter(&d, &ImportanceSet::everything(a, b)).unwrap(), d);
        let z = subband_filter(&d, &ImportanceSet::nothing(a, b)).unwrap();
        assert_eq!(z.coarse, d.coarse);
        assert!(z.details[..2].iter().flatten().all(|v| v.energy() == 0.0));
        assert_eq!(z.details[2], d.details[2]);
    }

    #[test]
    fn tree_and_decomposition_sets_agree() {
        let d = sphere_decomp();
        let t = crate::wavelet::pack_tree(&d).unwrap();
        let a = importance_set(&d, 0.04).unwrap();
        let b = importance_set_tree(&t, d.details[1][0].side(), 0.04).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn slots_partition_the_level() {
        let d = sphere_decomp();
        let p = importance_set(&d, 0.04).unwrap();
        let m = d.coarse.side();
        for level in 0..2 {
            let (a, b) = p.tree_slots(level, m);
            let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
            let n = all.len();
            all.sort_unstable();
            all.dedup();
            assert_eq!(all.len(), n);
            let side = if level == 0 { p.d0.side } else { p.d1.side };
            assert_eq!(n, 7 * side.pow(3));
        }
    }

    #[test]
    fn truncation_error_grows_with_rho() {
        let spec = GridSpec::unit_cube(32).unwrap();
        let shapes = [
            ShapeSpec::Sphere { center: [0.0; 3], radius: 0.3 },
            ShapeSpec::Box { center: [0.01, 0.0, 0.0], half_extents: [0.3, 0.2, 0.25] },
            ShapeSpec::Torus { center: [0.0; 3], major: 0.25, minor: 0.1, axis: 2 },
        ];
        for w in [WaveletFilterPair::haar(), WaveletFilterPair::cdf97(), WaveletFilterPair::bior68()] {
            for s in &shapes {
                let g = sdf_from_shape(s, &spec).unwrap();
                let d = dwt3(&g, &w, 3).unwrap();
                let sides = d.sides().unwrap();
                let mut last = 0.0;
                for rho in [0.01, 0.02, 0.04, 0.08] {
                    let f = subband_filter(&d, &importance_set(&d, rho).unwrap()).unwrap();
                    let r = idwt3_values(&f.coarse, &f.details, &sides, &w).unwrap();
                    let mse = r.data.iter().zip(g.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                    assert!(mse >= last * (1.0 - 1e-9), "{} {s:?} rho {rho}", w.family);
                    last = mse;
                }
            }
        }
    }
}
