use std::path::Path;

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

use super::condition::Condition;
use super::schedule::NoiseSchedule;
use crate::codec::LatentGrid;
use crate::error::{Error, Result};
use crate::io::{read_parsed, write_atomic, Reader, Writer};
use crate::rng;

/// Predicts the clean latent `Ẑ0` from a noised latent at step `t`.
pub trait Denoiser: Sync {
    /// `(side, dim)` of the latents this model handles.
    fn latent_shape(&self) -> (usize, usize);

    fn schedule(&self) -> &NoiseSchedule;

    fn predict_x0(&self, zt: &LatentGrid, t: usize, cond: &Condition) -> Result<LatentGrid>;

    /// Whether `Condition::None` queries give a meaningful unconditional
    /// prediction, as classifier-free guidance needs.
    fn has_unconditional(&self) -> bool;

    /// Interval every `Ẑ0` entry is clamped to during sampling.
    fn x0_range(&self) -> (f64, f64);

    fn check_latent(&self, z: &LatentGrid) -> Result<()> {
        let (side, dim) = self.latent_shape();
        if (z.side(), z.dim()) != (side, dim) {
            return Err(Error::param(format!(
                "denoiser expects {side}³×{dim} latents, got {}³×{}",
                z.side(),
                z.dim()
            )));
        }
        Ok(())
    }
}

/// Exact posterior mean for data drawn from `N(mean, diag(var))`.
#[derive(Clone, Debug)]
pub struct AnalyticGaussian {
    side: usize,
    dim: usize,
    mean: Vec<f64>,
    var: Vec<f64>,
    schedule: NoiseSchedule,
}

impl AnalyticGaussian {
    pub fn new(side: usize, dim: usize, mean: Vec<f64>, var: Vec<f64>, schedule: NoiseSchedule) -> Result<Self> {
        let n = side.pow(3) * dim;
        if mean.len() != n || var.len() != n {
            return Err(Error::param(format!("Gaussian law needs {n} means and variances")));
        }
        if var.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::param("Gaussian law needs finite means and non-negative variances"));
        }
        Ok(AnalyticGaussian { side, dim, mean, var, schedule })
    }

    /// Same mean and variance in every coordinate.
    pub fn isotropic(side: usize, dim: usize, mean: f64, var: f64, schedule: NoiseSchedule) -> Result<Self> {
        let n = side.pow(3) * dim;
        Self::new(side, dim, vec![mean; n], vec![var; n], schedule)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }
}

impl Denoiser for AnalyticGaussian {
    fn latent_shape(&self) -> (usize, usize) {
        (self.side, self.dim)
    }

    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn predict_x0(&self, zt: &LatentGrid, t: usize, _cond: &Condition) -> Result<LatentGrid> {
        self.check_latent(zt)?;
        self.schedule.check_t(t)?;
        let a = self.schedule.alpha_bar(t);
        let sa = a.sqrt();
        let v = zt
            .values()
            .iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(&z, (&m, &s2))| {
                let den = a * s2 + (1.0 - a);
                if a == 1.0 || den == 0.0 {
                    z
                } else {
                    m + sa * s2 / den * (z - sa * m)
                }
            })
            .collect();
        LatentGrid::new(self.side, self.dim, v)
    }

    fn has_unconditional(&self) -> bool {
        true
    }

    fn x0_range(&self) -> (f64, f64) {
        let lo = self.mean.iter().zip(&self.var).map(|(m, v)| m - 6.0 * v.sqrt()).fold(f64::INFINITY, f64::min);
        let hi = self.mean.iter().zip(&self.var).map(|(m, v)| m + 6.0 * v.sqrt()).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Settings for fitting a [`PerBucketLinear`] denoiser.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserTraining {
    pub steps: usize,
    pub buckets: usize,
    pub lambda: f64,
    pub dropout_p: f64,
    /// Noised samples drawn per training pair and bucket.
    pub draws: usize,
    pub seed: u64,
}

impl Default for DenoiserTraining {
    fn default() -> Self {
        DenoiserTraining {
            steps: 1000,
            buckets: 32,
            lambda: 1e-3,
            dropout_p: 0.1,
            draws: 8,
            seed: 0,
        }
    }
}

/// One affine map per timestep bucket from `[Z_t, √ᾱ_t, cond]` to `Z0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerBucketLinear {
    side: usize,
    dim: usize,
    cond_variant: u32,
    cond_dim: usize,
    schedule: NoiseSchedule,
    /// Bucket `k` covers `boundaries[k]..boundaries[k + 1]`; starts at 1 and
    /// ends at `T + 1`.
    boundaries: Vec<usize>,
    /// Per bucket, `P × (F + 1)` row-major: row = output coordinate, the
    /// last column is the bias.
    maps: Vec<Vec<f64>>,
    unconditional: bool,
    range: (f64, f64),
}

/// Geometric bucket edges over `[1, T]`, strictly increasing.
pub fn geometric_buckets(t_max: usize, buckets: usize) -> Result<Vec<usize>> {
    if buckets == 0 || buckets > t_max {
        return Err(Error::param(format!("bucket count must lie in 1..={t_max}, got {buckets}")));
    }
    let mut edges = vec![1usize];
    for k in 1..=buckets {
        let g = ((t_max + 1) as f64).powf(k as f64 / buckets as f64).round() as usize;
        let lo = edges[k - 1] + 1;
        let hi = t_max + 1 - (buckets - k);
        edges.push(g.clamp(lo, hi));
    }
    Ok(edges)
}

impl PerBucketLinear {
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn bucket_of(&self, t: usize) -> usize {
        self.boundaries[1..].partition_point(|&e| e <= t).min(self.maps.len() - 1)
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    fn feature_len(&self) -> usize {
        self.side.pow(3) * self.dim + 1 + self.cond_dim
    }

    fn cond_features<'a>(&self, cond: &'a Condition) -> Result<Option<&'a [f64]>> {
        if cond.is_none() {
            return Ok(None);
        }
        if cond.variant() != self.cond_variant || cond.dim() != self.cond_dim {
            return Err(Error::param(format!(
                "denoiser was trained on {}-dimensional variant-{} conditions, got a {}-dimensional {} condition",
                self.cond_dim,
                self.cond_variant,
                cond.dim(),
                cond.name()
            )));
        }
        Ok(Some(cond.features()))
    }
}

fn features(zt: &[f64], sqrt_ab: f64, cond: Option<&[f64]>, cond_dim: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(zt);
    out.push(sqrt_ab);
    match cond {
        Some(c) => out.extend_from_slice(c),
        None => out.extend(std::iter::repeat_n(0.0, cond_dim)),
    }
}

impl Denoiser for PerBucketLinear {
    fn latent_shape(&self) -> (usize, usize) {
        (self.side, self.dim)
    }

    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn predict_x0(&self, zt: &LatentGrid, t: usize, cond: &Condition) -> Result<LatentGrid> {
        self.check_latent(zt)?;
        self.schedule.check_t(t)?;
        let c = self.cond_features(cond)?;
        let mut f = Vec::with_capacity(self.feature_len());
        features(zt.values(), self.schedule.alpha_bar(t).sqrt(), c, self.cond_dim, &mut f);
        let map = &self.maps[self.bucket_of(t)];
        let fl = f.len();
        let out = (0..zt.len())
            .map(|i| {
                let row = &map[i * (fl + 1)..(i + 1) * (fl + 1)];
                row[..fl].iter().zip(&f).map(|(a, b)| a * b).sum::<f64>() + row[fl]
            })
            .collect();
        LatentGrid::new(self.side, self.dim, out)
    }

    fn has_unconditional(&self) -> bool {
        self.unconditional
    }

    fn x0_range(&self) -> (f64, f64) {
        self.range
    }
}

/// Ridge regression `Y ≈ X·W + b` with an unpenalized bias, on rows of `x`
/// (`n × f`) and `y` (`n × p`). Returns `W` (`f × p`) and `b`.
pub fn ridge(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::param(format!("ridge penalty must be finite and non-negative, got {lambda}")));
    }
    let (n, f) = x.shape();
    let xm: Vec<f64> = (0..f).map(|j| x.column(j).mean()).collect();
    let ym: Vec<f64> = (0..y.ncols()).map(|j| y.column(j).mean()).collect();
    let xc = DMatrix::from_fn(n, f, |i, j| x[(i, j)] - xm[j]);
    let yc = DMatrix::from_fn(n, y.ncols(), |i, j| y[(i, j)] - ym[j]);
    let solve = |mut a: DMatrix<f64>, rhs: DMatrix<f64>| -> Result<DMatrix<f64>> {
        for i in 0..a.nrows() {
            a[(i, i)] += lambda;
        }
        let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let chol = Cholesky::new(a).ok_or_else(|| Error::fit("normal equations are singular; use a positive ridge penalty"))?;
        let l = chol.l_dirty();
        let min_pivot = l.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
        if !(min_pivot > scale * 1e-12) {
            return Err(Error::fit("normal equations are singular; use a positive ridge penalty"));
        }
        Ok(chol.solve(&rhs))
    };
    let w = if n >= f {
        solve(xc.transpose() * &xc, xc.transpose() * &yc)?
    } else {
        let alpha = solve(&xc * xc.transpose(), yc)?;
        xc.transpose() * alpha
    };
    let b = (0..y.ncols())
        .map(|j| ym[j] - (0..f).map(|i| xm[i] * w[(i, j)]).sum::<f64>())
        .collect();
    Ok((w, b))
}

/// Fits one ridge map per timestep bucket on freshly noised copies of the
/// training latents. With probability `dropout_p` a sample's condition is
/// replaced by the zero vector, which is also what unconditional queries
/// see.
pub fn train_denoiser(pairs: &[(LatentGrid, Condition)], cfg: &DenoiserTraining) -> Result<PerBucketLinear> {
    if pairs.len() < 10 {
        return Err(Error::fit(format!("denoiser training needs at least 10 pairs, got {}", pairs.len())));
    }
    if !(0.0..=1.0).contains(&cfg.dropout_p) {
        return Err(Error::param("condition dropout must lie in [0, 1]"));
    }
    if cfg.draws == 0 {
        return Err(Error::param("at least one noised draw per pair is needed"));
    }
    let schedule = NoiseSchedule::cosine(cfg.steps)?;
    let boundaries = geometric_buckets(cfg.steps, cfg.buckets)?;
    let (z0, c0) = &pairs[0];
    let (side, dim) = (z0.side(), z0.dim());
    let (cond_variant, cond_dim) = (c0.variant(), c0.dim());
    for (z, c) in pairs {
        if (z.side(), z.dim()) != (side, dim) {
            return Err(Error::param("training latents differ in shape"));
        }
        if (c.variant(), c.dim()) != (cond_variant, cond_dim) {
            return Err(Error::param("training conditions differ in kind or dimension"));
        }
    }
    let p = side.pow(3) * dim;
    let fl = p + 1 + cond_dim;

    let all: Vec<f64> = pairs.iter().flat_map(|(z, _)| z.values().iter().copied()).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let sd = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64).sqrt();

    let mut maps = Vec::with_capacity(cfg.buckets);
    let mut row = Vec::with_capacity(fl);
    for k in 0..cfg.buckets {
        let mut rng = rng::stage_rng(cfg.seed, &format!("denoiser-bucket-{k}"));
        let (lo, hi) = (boundaries[k], boundaries[k + 1]);
        let n = pairs.len() * cfg.draws;
        let mut x = DMatrix::<f64>::zeros(n, fl);
        let mut y = DMatrix::<f64>::zeros(n, p);
        let mut r = 0;
        for (z, c) in pairs {
            for _ in 0..cfg.draws {
                let t = rng.random_range(lo..hi);
                let a = schedule.alpha_bar(t);
                let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
                let zt: Vec<f64> = z
                    .values()
                    .iter()
                    .map(|v| sa * v + sn * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let drop = cond_dim > 0 && rng.random::<f64>() < cfg.dropout_p;
                let cf = if drop || c.is_none() { None } else { Some(c.features()) };
                features(&zt, sa, cf, cond_dim, &mut row);
                for (j, v) in row.iter().enumerate() {
                    x[(r, j)] = *v;
                }
                for (j, v) in z.values().iter().enumerate() {
                    y[(r, j)] = *v;
                }
                r += 1;
            }
        }
        let (w, b) = ridge(&x, &y, cfg.lambda)?;
        let mut m = vec![0.0; p * (fl + 1)];
        for i in 0..p {
            for j in 0..fl {
                m[i * (fl + 1) + j] = w[(j, i)];
            }
            m[i * (fl + 1) + fl] = b[i];
        }
        maps.push(m);
    }
    Ok(PerBucketLinear {
        side,
        dim,
        cond_variant,
        cond_dim,
        schedule,
        boundaries,
        maps,
        unconditional: cond_dim == 0 || cfg.dropout_p > 0.0,
        range: (mean - 6.0 * sd, mean + 6.0 * sd),
    })
}

/// `DN01` layout, little-endian: magic, `u32` T, `u32` latent side, `u32`
/// latent dim, `u32` condition variant, `u32` condition dim, `u32`
/// unconditional flag, `f32` clamp low and high, `u32` bucket count B,
/// `B + 1` `u32` bucket edges, then per bucket the `P × (F + 1)` affine map
/// as `f32` row-major (`P = S³·d`, `F = P + 1 + cond dim`, bias last).
pub fn denoiser_bytes(m: &PerBucketLinear) -> Vec<u8> {
    let mut w = Writer::new(b"DN01");
    w.u32(m.schedule.steps())
        .u32(m.side)
        .u32(m.dim)
        .u32(m.cond_variant as usize)
        .u32(m.cond_dim)
        .u32(m.unconditional as usize)
        .f32(m.range.0)
        .f32(m.range.1)
        .u32(m.maps.len());
    for &e in &m.boundaries {
        w.u32(e);
    }
    for map in &m.maps {
        w.f32s(map);
    }
    w.finish()
}

pub fn parse_denoiser(bytes: &[u8]) -> Result<PerBucketLinear> {
    let mut r = Reader::new(bytes, b"DN01", "DN01 denoiser")?;
    let steps = r.u32()?;
    let side = r.u32()?;
    let dim = r.u32()?;
    let cond_variant = r.u32()? as u32;
    let cond_dim = r.u32()?;
    let unconditional = match r.u32()? {
        0 => false,
        1 => true,
        v => return Err(Error::data(format!("DN01 denoiser: bad unconditional flag {v}"))),
    };
    let range = (r.f32()?, r.f32()?);
    let buckets = r.u32()?;
    if steps == 0 || side == 0 || dim == 0 || buckets == 0 || buckets > steps || cond_variant > 2 {
        return Err(Error::data("DN01 denoiser: invalid header"));
    }
    let boundaries = (0..=buckets).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    if boundaries[0] != 1 || boundaries[buckets] != steps + 1 || boundaries.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::data("DN01 denoiser: bucket edges must rise from 1 to T + 1"));
    }
    let p = side.pow(3) * dim;
    let len = p * (p + 2 + cond_dim);
    let maps = (0..buckets).map(|_| r.f32s(len)).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(PerBucketLinear {
        side,
        dim,
        cond_variant,
        cond_dim,
        schedule: NoiseSchedule::cosine(steps)?,
        boundaries,
        maps,
        unconditional,
        range,
    })
}

pub fn write_denoiser(path: &Path, m: &PerBucketLinear) -> Result<()> {
    write_atomic(path, &denoiser_bytes(m))
}

pub fn read_denoiser(path: &Path) -> Result<PerBucketLinear> {
    read_parsed(path, parse_denoiser)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::Distribution;

    fn gaussian_pairs(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<(LatentGrid, Condition)> {
        let mut r = rng::rng(seed);
        (0..n)
            .map(|_| {
                let v = (0..8).map(|_| mean + sd * r.sample::<f64, _>(StandardNormal)).collect();
                (LatentGrid::new(1, 8, v).unwrap(), Condition::None)
            })
            .collect()
    }

    #[test]
    fn bucket_edges() {
        let e = geometric_buckets(1000, 32).unwrap();
        assert_eq!(e.len(), 33);
        assert_eq!((e[0], e[32]), (1, 1001));
        assert!(e.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(geometric_buckets(4, 4).unwrap(), vec![1, 2, 3, 4, 5]);
        assert!(geometric_buckets(4, 5).is_err());
    }

    #[test]
    fn constant_target_is_learned() {
        let z = LatentGrid::new(1, 2, vec![0.7, -1.2]).unwrap();
        let pairs = vec![(z.clone(), Condition::None); 12];
        let cfg = DenoiserTraining { steps: 100, buckets: 4, ..Default::default() };
        let m = train_denoiser(&pairs, &cfg).unwrap();
        let mut r = rng::rng(5);
        for t in [1, 10, 50, 100] {
            let zt = LatentGrid::new(1, 2, vec![r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)]).unwrap();
            let p = m.predict_x0(&zt, t, &Condition::None).unwrap();
            let mse = p.values().iter().zip(z.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 2.0;
            assert!(mse <= 1e-6, "t={t}: {mse}");
        }
    }

    #[test]
    fn huge_penalty_predicts_the_mean() {
        let pairs = gaussian_pairs(40, 0.3, 1.0, 1);
        let cfg = DenoiserTraining { steps: 50, buckets: 2, lambda: 1e12, draws: 3, ..Default::default() };
        let m = train_denoiser(&pairs, &cfg).unwrap();
        let p = m.predict_x0(&LatentGrid::new(1, 8, vec![2.0; 8]).unwrap(), 3, &Condition::None).unwrap();
        let mean = pairs.iter().map(|(z, _)| z.values()[0]).sum::<f64>() / 40.0;
        assert!((p.values()[0] - mean).abs() < 1e-6);
    }

    #[test]
    fn heavy_noise_prediction_approaches_the_prior_mean() {
        let mu = 1.5;
        let pairs = gaussian_pairs(400, mu, 0.5, 2);
        let cfg = DenoiserTraining { steps: 1000, buckets: 8, draws: 4, ..Default::default() };
        let m = train_denoiser(&pairs, &cfg).unwrap();
        let mut r = rng::rng(3);
        let mut acc = 0.0;
        let trials = 200;
        for _ in 0..trials {
            let zt = LatentGrid::new(1, 8, (0..8).map(|_| StandardNormal.sample(&mut r)).collect()).unwrap();
            let p = m.predict_x0(&zt, 1000, &Condition::None).unwrap();
            acc += p.values().iter().sum::<f64>() / 8.0;
        }
        let avg = acc / trials as f64;
        assert!((avg - mu).abs() <= 0.02 * mu, "{avg}");
    }

    #[test]
    fn zero_penalty_on_singular_data_is_a_fit_error() {
        // a single timestep makes the √ᾱ feature constant
        let pairs = gaussian_pairs(10, 0.0, 1.0, 4);
        let cfg = DenoiserTraining { steps: 1, buckets: 1, lambda: 0.0, draws: 4, ..Default::default() };
        assert!(matches!(train_denoiser(&pairs, &cfg), Err(Error::Fit(_))));
    }

    #[test]
    fn too_few_pairs() {
        let pairs = gaussian_pairs(9, 0.0, 1.0, 4);
        assert!(matches!(train_denoiser(&pairs, &DenoiserTraining::default()), Err(Error::Fit(_))));
    }

    #[test]
    fn ridge_recovers_an_exact_affine_map() {
        let mut r = rng::rng(8);
        let x = DMatrix::from_fn(30, 3, |_, _| r.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(30, 2, |i, j| 2.0 * x[(i, 0)] - x[(i, 2)] * (j as f64 + 1.0) + 0.5);
        let (w, b) = ridge(&x, &y, 0.0).unwrap();
        assert!((w[(0, 0)] - 2.0).abs() < 1e-10 && (w[(2, 1)] + 2.0).abs() < 1e-10);
        assert!((b[0] - 0.5).abs() < 1e-10);
        // dual route on a wide design agrees with the primal one
        let xw = DMatrix::from_fn(5, 8, |_, _| r.random_range(-1.0..1.0));
        let yw = DMatrix::from_fn(5, 1, |_, _| r.random_range(-1.0..1.0));
        let (wd, bd) = ridge(&xw, &yw, 0.1).unwrap();
        let xm = DMatrix::from_fn(5, 8, |i, j| xw[(i, j)] - xw.column(j).mean());
        let ym = DMatrix::from_fn(5, 1, |i, _| yw[(i, 0)] - yw.column(0).mean());
        let mut a = xm.transpose() * &xm;
        for i in 0..8 {
            a[(i, i)] += 0.1;
        }
        let wp = a.cholesky().unwrap().solve(&(xm.transpose() * ym));
        assert!((wd - wp).abs().max() < 1e-10);
        assert!(bd[0].is_finite());
    }

    #[test]
    fn conditioned_model_round_trips_through_dn01() {
        let mut r = rng::rng(6);
        let pairs: Vec<_> = (0..12)
            .map(|i| {
                let z = LatentGrid::new(1, 2, vec![i as f64 * 0.1, 1.0 - i as f64 * 0.05]).unwrap();
                (z, Condition::PointCloud(vec![r.random::<f64>(), i as f64 / 12.0]))
            })
            .collect();
        let cfg = DenoiserTraining { steps: 20, buckets: 3, draws: 2, ..Default::default() };
        let m = train_denoiser(&pairs, &cfg).unwrap();
        assert!(m.has_unconditional());
        let b = denoiser_bytes(&m);
        assert_eq!(&b[..4], b"DN01");
        let back = parse_denoiser(&b).unwrap();
        assert_eq!(denoiser_bytes(&back), b);
        assert_eq!(back.boundaries(), m.boundaries());
        let bad = Condition::Voxel(vec![0.0, 1.0]);
        assert!(m.predict_x0(&pairs[0].0, 5, &bad).is_err());
    }

    #[test]
    fn analytic_posterior_mean() {
        let s = NoiseSchedule::cosine(100).unwrap();
        let g = AnalyticGaussian::isotropic(1, 1, 2.0, 0.25, s.clone()).unwrap();
        let z = LatentGrid::new(1, 1, vec![0.4]).unwrap();
        assert_eq!(g.predict_x0(&z, 0, &Condition::None).unwrap().values()[0], 0.4);
        let a = s.alpha_bar(30);
        let expect = 2.0 + a.sqrt() * 0.25 / (a * 0.25 + 1.0 - a) * (0.4 - a.sqrt() * 2.0);
        assert!((g.predict_x0(&z, 30, &Condition::None).unwrap().values()[0] - expect).abs() < 1e-15);
        assert_eq!(g.x0_range(), (-1.0, 5.0));
    }
}
