use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WaveletFamily {
    /// Orthonormal Haar.
    Haar,
    /// Cohen–Daubechies–Feauveau 9/7 (`bior4.4`), zero-padded to 10 taps.
    Cdf97,
    /// Spline biorthogonal 6.8 (`bior6.8`), 18 taps.
    Bior68,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    /// Circular wrap; each level halves the length exactly.
    Periodic,
    /// Half-sample symmetric reflection (`x[-1] = x[0]`); each level maps
    /// length `n` to `(n + taps - 1) / 2`.
    Symmetric,
}

impl WaveletFamily {
    pub fn tag(self) -> u32 {
        match self {
            WaveletFamily::Haar => 0,
            WaveletFamily::Cdf97 => 1,
            WaveletFamily::Bior68 => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(WaveletFamily::Haar),
            1 => Ok(WaveletFamily::Cdf97),
            2 => Ok(WaveletFamily::Bior68),
            t => Err(Error::data(format!("unknown wavelet family tag {t}"))),
        }
    }

    pub fn default_boundary(self) -> Boundary {
        match self {
            WaveletFamily::Haar => Boundary::Periodic,
            _ => Boundary::Symmetric,
        }
    }
}

impl fmt::Display for WaveletFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WaveletFamily::Haar => "haar",
            WaveletFamily::Cdf97 => "cdf97",
            WaveletFamily::Bior68 => "bior68",
        })
    }
}

impl FromStr for WaveletFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "haar" => Ok(WaveletFamily::Haar),
            "cdf97" | "bior4.4" | "bior44" => Ok(WaveletFamily::Cdf97),
            "bior68" | "bior6.8" => Ok(WaveletFamily::Bior68),
            other => Err(Error::param(format!(
                "unknown wavelet {other:?}; expected haar, cdf97 or bior68"
            ))),
        }
    }
}

impl Boundary {
    pub fn tag(self) -> u32 {
        match self {
            Boundary::Periodic => 0,
            Boundary::Symmetric => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(Boundary::Periodic),
            1 => Ok(Boundary::Symmetric),
            t => Err(Error::data(format!("unknown boundary tag {t}"))),
        }
    }
}

/// Analysis and synthesis filters plus the boundary rule.
///
/// Coefficients use the convolution convention
/// `lo[o] = Σ_j analysis_lo[j] · x[2o + 1 − j]`, with synthesis
/// `x[k] = Σ_o lo[o] · synthesis_lo[k + F − 2 − 2o] + (same for hi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletFilterPair {
    pub family: WaveletFamily,
    pub analysis_lo: Vec<f64>,
    pub analysis_hi: Vec<f64>,
    pub synthesis_lo: Vec<f64>,
    pub synthesis_hi: Vec<f64>,
    pub boundary: Boundary,
}

const HAAR: f64 = std::f64::consts::FRAC_1_SQRT_2;

const CDF97_LO: [f64; 10] = [
    0.0,
    0.037_828_455_507_264_04,
    -0.023_849_465_019_556_843,
    -0.110_624_404_418_437_18,
    0.377_402_855_612_830_66,
    0.852_698_679_008_893_8,
    0.377_402_855_612_830_66,
    -0.110_624_404_418_437_18,
    -0.023_849_465_019_556_843,
    0.037_828_455_507_264_04,
];

const CDF97_REC_LO: [f64; 10] = [
    0.0,
    -0.064_538_882_628_697_06,
    -0.040_689_417_609_164_06,
    0.418_092_273_221_617_24,
    0.788_485_616_405_582_9,
    0.418_092_273_221_617_24,
    -0.040_689_417_609_164_06,
    -0.064_538_882_628_697_06,
    0.0,
    0.0,
];

const BIOR68_LO: [f64; 18] = [
    0.0,
    0.001_908_831_736_481_290_6,
    -0.001_914_286_129_088_766_7,
    -0.016_990_639_867_602_342,
    0.011_934_565_279_729_26,
    0.049_732_903_490_940_79,
    -0.077_263_173_167_204_14,
    -0.094_059_203_495_736_46,
    0.420_796_284_609_826_8,
    0.825_922_997_458_402_3,
    0.420_796_284_609_826_8,
    -0.094_059_203_495_736_46,
    -0.077_263_173_167_204_14,
    0.049_732_903_490_940_79,
    0.011_934_565_279_729_26,
    -0.016_990_639_867_602_342,
    -0.001_914_286_129_088_766_7,
    0.001_908_831_736_481_290_6,
];

const BIOR68_REC_LO: [f64; 18] = [
    0.0,
    0.0,
    0.0,
    0.014_426_282_505_624_435,
    0.014_467_504_896_790_148,
    -0.078_722_001_062_628_82,
    -0.040_367_979_030_339_92,
    0.417_849_109_150_274_57,
    0.758_907_729_453_654_1,
    0.417_849_109_150_274_57,
    -0.040_367_979_030_339_92,
    -0.078_722_001_062_628_82,
    0.014_467_504_896_790_148,
    0.014_426_282_505_624_435,
    0.0,
    0.0,
    0.0,
    0.0,
];

/// `(-1)^(j + odd) · f[j]`: the dual highpass of a biorthogonal lowpass.
fn modulate(f: &[f64], odd: usize) -> Vec<f64> {
    f.iter()
        .enumerate()
        .map(|(j, &v)| if (j + odd) % 2 == 1 { -v } else { v })
        .collect()
}

impl WaveletFilterPair {
    pub fn new(family: WaveletFamily, boundary: Boundary) -> Self {
        let (analysis_lo, synthesis_lo): (Vec<f64>, Vec<f64>) = match family {
            WaveletFamily::Haar => (vec![HAAR, HAAR], vec![HAAR, HAAR]),
            WaveletFamily::Cdf97 => (CDF97_LO.to_vec(), CDF97_REC_LO.to_vec()),
            WaveletFamily::Bior68 => (BIOR68_LO.to_vec(), BIOR68_REC_LO.to_vec()),
        };
        let analysis_hi = modulate(&synthesis_lo, 1);
        let synthesis_hi = modulate(&analysis_lo, 0);
        WaveletFilterPair {
            family,
            analysis_lo,
            analysis_hi,
            synthesis_lo,
            synthesis_hi,
            boundary,
        }
    }

    pub fn haar() -> Self {
        Self::new(WaveletFamily::Haar, Boundary::Periodic)
    }

    pub fn cdf97() -> Self {
        Self::new(WaveletFamily::Cdf97, Boundary::Symmetric)
    }

    pub fn bior68() -> Self {
        Self::new(WaveletFamily::Bior68, Boundary::Symmetric)
    }

    /// Family with its default boundary rule.
    pub fn of(family: WaveletFamily) -> Self {
        Self::new(family, family.default_boundary())
    }

    pub fn taps(&self) -> usize {
        self.analysis_lo.len()
    }

    /// Length of each half-band produced from a length-`n` signal.
    pub fn analysis_len(&self, n: usize) -> Result<usize> {
        match self.boundary {
            Boundary::Periodic if !n.is_multiple_of(2) || n == 0 => Err(Error::param(format!(
                "periodic wavelet transform needs an even length, got {n}"
            ))),
            Boundary::Periodic => Ok(n / 2),
            Boundary::Symmetric if n == 0 => Err(Error::param("cannot transform an empty signal")),
            Boundary::Symmetric => Ok((n + self.taps() - 1) / 2),
        }
    }

    /// Analyses `x`, writing `analysis_len(x.len())` values to each band.
    pub fn analyze(&self, x: &[f64], lo: &mut [f64], hi: &mut [f64]) {
        let n = x.len() as isize;
        let f = self.taps();
        for o in 0..lo.len() {
            let mut a = 0.0;
            let mut d = 0.0;
            for j in 0..f {
                let i = 2 * o as isize + 1 - j as isize;
                let xi = x[self.extend(i, n)];
                a += self.analysis_lo[j] * xi;
                d += self.analysis_hi[j] * xi;
            }
            lo[o] = a;
            hi[o] = d;
        }
    }

    /// Rebuilds the first `out.len()` samples from the two bands.
    pub fn synthesize(&self, lo: &[f64], hi: &[f64], out: &mut [f64]) {
        let f = self.taps() as isize;
        match self.boundary {
            Boundary::Symmetric => {
                for (k, slot) in out.iter_mut().enumerate() {
                    let mut s = 0.0;
                    // j = k + F - 2 - 2o must lie in [0, F)
                    let k = k as isize;
                    let o_min = ((k - 1).max(0) + 1) / 2;
                    let o_max = ((k + f - 2) / 2).min(lo.len() as isize - 1);
                    for o in o_min.max(0)..=o_max {
                        let j = (k + f - 2 - 2 * o) as usize;
                        s += lo[o as usize] * self.synthesis_lo[j] + hi[o as usize] * self.synthesis_hi[j];
                    }
                    *slot = s;
                }
            }
            Boundary::Periodic => {
                let n = out.len() as isize;
                out.iter_mut().for_each(|v| *v = 0.0);
                for o in 0..lo.len() {
                    for j in 0..f {
                        let k = (2 * o as isize + j - f + 2).rem_euclid(n) as usize;
                        out[k] += lo[o] * self.synthesis_lo[j as usize] + hi[o] * self.synthesis_hi[j as usize];
                    }
                }
            }
        }
    }

    #[inline]
    fn extend(&self, mut i: isize, n: isize) -> usize {
        match self.boundary {
            Boundary::Periodic => i.rem_euclid(n) as usize,
            Boundary::Symmetric => {
                loop {
                    if i < 0 {
                        i = -1 - i;
                    } else if i >= n {
                        i = 2 * n - 1 - i;
                    } else {
                        return i as usize;
                    }
                }
            }
        }
    }
}
