use rayon::prelude::*;

use super::filters::WaveletFilterPair;
use crate::error::{Error, Result};
use crate::geometry::{GridSpec, SdfGrid};

/// Dense 3-D array, x varying fastest. Sides may differ mid-transform.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl Volume {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Volume {
            dims,
            data: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn cube(side: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != side.pow(3) {
            return Err(Error::param(format!(
                "cube of side {side} needs {} values, got {}",
                side.pow(3),
                data.len()
            )));
        }
        Ok(Volume {
            dims: [side; 3],
            data,
        })
    }

    pub fn side(&self) -> usize {
        self.dims[0]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }

    /// Base offsets of every line running along `axis`, in storage order.
    fn line_starts(&self, axis: usize) -> Vec<usize> {
        let [nx, ny, nz] = self.dims;
        let mut starts = Vec::with_capacity(self.data.len() / self.dims[axis].max(1));
        for z in 0..if axis == 2 { 1 } else { nz } {
            for y in 0..if axis == 1 { 1 } else { ny } {
                for x in 0..if axis == 0 { 1 } else { nx } {
                    starts.push(self.index(x, y, z));
                }
            }
        }
        starts
    }
}

/// Splits `v` along `axis` into lowpass and highpass halves.
fn analyze_axis(v: &Volume, axis: usize, w: &WaveletFilterPair) -> Result<(Volume, Volume)> {
    let n = v.dims[axis];
    let m = w.analysis_len(n)?;
    let mut dims = v.dims;
    dims[axis] = m;
    let mut lo = Volume::zeros(dims);
    let mut hi = Volume::zeros(dims);
    let in_stride = v.stride(axis);
    let out_stride = lo.stride(axis);
    let in_starts = v.line_starts(axis);
    let out_starts = lo.line_starts(axis);
    let lines: Vec<(Vec<f64>, Vec<f64>)> = in_starts
        .par_iter()
        .map(|&s| {
            let line: Vec<f64> = (0..n).map(|i| v.data[s + i * in_stride]).collect();
            let mut a = vec![0.0; m];
            let mut d = vec![0.0; m];
            w.analyze(&line, &mut a, &mut d);
            (a, d)
        })
        .collect();
    for ((a, d), &s) in lines.iter().zip(&out_starts) {
        for i in 0..m {
            lo.data[s + i * out_stride] = a[i];
            hi.data[s + i * out_stride] = d[i];
        }
    }
    Ok((lo, hi))
}

/// Inverse of [`analyze_axis`], producing `n_out` samples along `axis`.
fn synthesize_axis(lo: &Volume, hi: &Volume, axis: usize, n_out: usize, w: &WaveletFilterPair) -> Volume {
    let m = lo.dims[axis];
    let mut dims = lo.dims;
    dims[axis] = n_out;
    let mut out = Volume::zeros(dims);
    let in_stride = lo.stride(axis);
    let out_stride = out.stride(axis);
    let in_starts = lo.line_starts(axis);
    let out_starts = out.line_starts(axis);
    let lines: Vec<Vec<f64>> = in_starts
        .par_iter()
        .map(|&s| {
            let a: Vec<f64> = (0..m).map(|i| lo.data[s + i * in_stride]).collect();
            let d: Vec<f64> = (0..m).map(|i| hi.data[s + i * in_stride]).collect();
            let mut line = vec![0.0; n_out];
            w.synthesize(&a, &d, &mut line);
            line
        })
        .collect();
    for (line, &s) in lines.iter().zip(&out_starts) {
        for (i, &v) in line.iter().enumerate() {
            out.data[s + i * out_stride] = v;
        }
    }
    out
}

/// One separable analysis step: x, then y, then z.
///
/// Band `b` in the returned array is highpass along axis `a` iff bit `a` of
/// `b` is set, so band 0 is the lowpass cube and bands 1..8 are the seven
/// detail subbands.
pub fn analyze_once(v: &Volume, w: &WaveletFilterPair) -> Result<[Volume; 8]> {
    let mut bands = vec![v.clone()];
    for axis in 0..3 {
        let mut next = vec![Volume::zeros([0; 3]); bands.len() * 2];
        for (b, band) in bands.iter().enumerate() {
            let (lo, hi) = analyze_axis(band, axis, w)?;
            next[b] = lo;
            next[b | (1 << axis)] = hi;
        }
        bands = next;
    }
    Ok(bands.try_into().expect("eight bands"))
}

/// Inverse of [`analyze_once`]; `side` is the original cube side.
pub fn synthesize_once(bands: &[Volume; 8], side: usize, w: &WaveletFilterPair) -> Volume {
    let mut current: Vec<Volume> = bands.to_vec();
    for axis in (0..3).rev() {
        let half = current.len() / 2;
        let mut next = Vec::with_capacity(half);
        for b in 0..half {
            next.push(synthesize_axis(&current[b], &current[b | (1 << axis)], axis, side, w));
        }
        current = next;
    }
    current.pop().expect("one band left")
}

/// Sides of the lowpass cube after each analysis step: `sides[0]` is the
/// input side and `sides[levels]` the coarse side.
pub fn level_sides(n: usize, w: &WaveletFilterPair, levels: usize) -> Result<Vec<usize>> {
    let mut sides = vec![n];
    for _ in 0..levels {
        let s = *sides.last().unwrap();
        sides.push(w.analysis_len(s)?);
    }
    Ok(sides)
}

/// Multi-level decomposition of a TSDF grid.
///
/// `details[0]` is the coarsest level (D0, same side as the coarse cube);
/// `details[levels - 1]` is the finest. Each level holds its seven detail
/// subbands in band order 1..8 (see [`analyze_once`]).
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletDecomposition {
    pub spec: GridSpec,
    pub filters: WaveletFilterPair,
    pub coarse: Volume,
    pub details: Vec<[Volume; 7]>,
}

impl WaveletDecomposition {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn sides(&self) -> Result<Vec<usize>> {
        level_sides(self.spec.resolution, &self.filters, self.levels())
    }

    /// All-zero decomposition with the layout `dwt3` would produce.
    pub fn zeros(spec: GridSpec, filters: WaveletFilterPair, levels: usize) -> Result<Self> {
        let sides = level_sides(spec.resolution, &filters, levels)?;
        let coarse = Volume::zeros([sides[levels]; 3]);
        let details = (0..levels)
            .map(|j| std::array::from_fn(|_| Volume::zeros([sides[levels - j]; 3])))
            .collect();
        Ok(WaveletDecomposition {
            spec,
            filters,
            coarse,
            details,
        })
    }

    /// Total number of stored coefficients.
    pub fn coefficient_count(&self) -> usize {
        self.coarse.data.len() + self.details.iter().flatten().map(|v| v.data.len()).sum::<usize>()
    }

    pub fn energy(&self) -> f64 {
        self.coarse.energy() + self.details.iter().flatten().map(Volume::energy).sum::<f64>()
    }

    /// Coefficient-wise `a·self + b·other`.
    pub fn axpby(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.check_same_layout(other)?;
        let mix = |x: &Volume, y: &Volume| Volume {
            dims: x.dims,
            data: x.data.iter().zip(&y.data).map(|(p, q)| a * p + b * q).collect(),
        };
        Ok(WaveletDecomposition {
            spec: self.spec.clone(),
            filters: self.filters.clone(),
            coarse: mix(&self.coarse, &other.coarse),
            details: self
                .details
                .iter()
                .zip(&other.details)
                .map(|(l, r)| std::array::from_fn(|s| mix(&l[s], &r[s])))
                .collect(),
        })
    }

    pub(crate) fn check_same_layout(&self, other: &Self) -> Result<()> {
        let same = self.coarse.dims == other.coarse.dims
            && self.levels() == other.levels()
            && self
                .details
                .iter()
                .zip(&other.details)
                .all(|(a, b)| a[0].dims == b[0].dims);
        if same {
            Ok(())
        } else {
            Err(Error::param("wavelet decompositions have different layouts"))
        }
    }
}

/// Forward transform of raw cube values.
pub fn dwt3_values(values: &[f64], n: usize, w: &WaveletFilterPair, levels: usize) -> Result<(Volume, Vec<[Volume; 7]>)> {
    if levels == 0 {
        return Err(Error::param("at least one decomposition level is required"));
    }
    if w.boundary == super::Boundary::Periodic && !n.is_multiple_of(1 << levels) {
        return Err(Error::param(format!(
            "resolution {n} is not divisible by 2^{levels} for a periodic transform"
        )));
    }
    let mut current = Volume::cube(n, values.to_vec())?;
    let mut fine_to_coarse = Vec::with_capacity(levels);
    for _ in 0..levels {
        let [low, b1, b2, b3, b4, b5, b6, b7] = analyze_once(&current, w)?;
        fine_to_coarse.push([b1, b2, b3, b4, b5, b6, b7]);
        current = low;
    }
    fine_to_coarse.reverse();
    Ok((current, fine_to_coarse))
}

/// Inverse of [`dwt3_values`].
pub fn idwt3_values(coarse: &Volume, details: &[[Volume; 7]], sides: &[usize], w: &WaveletFilterPair) -> Result<Volume> {
    let levels = details.len();
    if sides.len() != levels + 1 || coarse.dims != [sides[levels]; 3] {
        return Err(Error::param("coarse cube does not match the decomposition layout"));
    }
    let mut current = coarse.clone();
    for (j, level) in details.iter().enumerate() {
        let side = sides[levels - 1 - j];
        if level.iter().any(|b| b.dims != current.dims) {
            return Err(Error::param(format!("detail level {j} has the wrong shape")));
        }
        let bands: [Volume; 8] = std::array::from_fn(|b| if b == 0 { current.clone() } else { level[b - 1].clone() });
        current = synthesize_once(&bands, side, w);
    }
    Ok(current)
}

/// Forward `levels`-level separable transform of a TSDF grid.
pub fn dwt3(grid: &SdfGrid, filters: &WaveletFilterPair, levels: usize) -> Result<WaveletDecomposition> {
    let (coarse, details) = dwt3_values(grid.values(), grid.resolution(), filters, levels)?;
    Ok(WaveletDecomposition {
        spec: grid.spec().clone(),
        filters: filters.clone(),
        coarse,
        details,
    })
}

/// Inverse transform; the result is re-clamped to the truncation band.
pub fn idwt3(decomp: &WaveletDecomposition, filters: &WaveletFilterPair) -> Result<SdfGrid> {
    if *filters != decomp.filters {
        return Err(Error::param(format!(
            "decomposition was built with {} / {:?}, not {} / {:?}",
            decomp.filters.family, decomp.filters.boundary, filters.family, filters.boundary
        )));
    }
    let sides = decomp.sides()?;
    let v = idwt3_values(&decomp.coarse, &decomp.details, &sides, filters)?;
    SdfGrid::new(decomp.spec.clone(), v.data)
}
