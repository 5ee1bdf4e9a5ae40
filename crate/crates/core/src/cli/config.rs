use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{Family, DEFAULT_TEST_FRACTION};
use crate::diffusion::{geometric_buckets, uniform_steps, DenoiserTraining};
use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::metrics::DEFAULT_CHAMFER_SAMPLES;
use crate::wavelet::{TreeGeometry, WaveletFamily, WaveletFilterPair, DEFAULT_RHO, TREE_CHANNELS};

/// Every tunable of a run. Loaded from TOML; unknown keys are rejected and
/// missing ones take the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub wavelet: WaveletConfig,
    pub corpus: CorpusConfig,
    pub codec: CodecConfig,
    pub codebook: CodebookConfig,
    pub diffusion: DiffusionConfig,
    pub sampler: SamplerSection,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub resolution: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveletConfig {
    pub family: String,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// `family=count` pairs separated by commas.
    pub recipe: String,
    pub test_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    pub block: usize,
    pub latent_dim: usize,
    pub weighted: bool,
    /// Per-tag sample size for balanced fine-tuning; 0 skips it.
    pub finetune_cap: usize,
    pub finetune_iters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookConfig {
    /// 0 runs without vector quantization.
    pub size: usize,
    pub iters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionConfig {
    pub timesteps: usize,
    pub buckets: usize,
    pub lambda: f64,
    pub dropout: f64,
    pub draws: usize,
    /// `none`, `pointcloud` or `voxel`.
    pub condition: String,
    pub condition_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub steps: usize,
    pub scale: f64,
    pub snap: bool,
    /// Number of shapes to generate; 0 skips denoiser training and sampling.
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub chamfer_samples: usize,
    /// `train`, `test` or `all`.
    pub split: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub shapes: Option<PathBuf>,
    pub out: Option<PathBuf>,
}


impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { resolution: 64 }
    }
}

impl Default for WaveletConfig {
    fn default() -> Self {
        WaveletConfig { family: "cdf97".into(), rho: DEFAULT_RHO }
    }
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { recipe: "sphere=50,box=50,torus=50,csg=50".into(), test_fraction: DEFAULT_TEST_FRACTION }
    }
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig { block: 4, latent_dim: 4, weighted: true, finetune_cap: 0, finetune_iters: 10 }
    }
}

impl Default for CodebookConfig {
    fn default() -> Self {
        CodebookConfig { size: 1024, iters: 20 }
    }
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        let d = DenoiserTraining::default();
        DiffusionConfig {
            timesteps: d.steps,
            buckets: d.buckets,
            lambda: d.lambda,
            dropout: d.dropout_p,
            draws: d.draws,
            condition: "none".into(),
            condition_points: 2500,
        }
    }
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection { steps: 1000, scale: 1.0, snap: true, count: 4 }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { chamfer_samples: DEFAULT_CHAMFER_SAMPLES, split: "test".into() }
    }
}

/// Condition features extracted for training and sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditionKind {
    None,
    PointCloud,
    Voxel,
}

impl std::str::FromStr for ConditionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ConditionKind::None),
            "pointcloud" => Ok(ConditionKind::PointCloud),
            "voxel" => Ok(ConditionKind::Voxel),
            other => Err(Error::Config(format!("condition must be none, pointcloud or voxel, got {other:?}"))),
        }
    }
}

/// Which manifest records a command reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitFilter {
    Train,
    Test,
    All,
}

impl std::str::FromStr for SplitFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitFilter::Train),
            "test" => Ok(SplitFilter::Test),
            "all" => Ok(SplitFilter::All),
            other => Err(Error::Config(format!("split must be train, test or all, got {other:?}"))),
        }
    }
}

pub fn parse_recipe(text: &str) -> Result<Vec<(Family, usize)>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (name, count) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("recipe entry {item:?} is not family=count")))?;
            let family: Family = name.trim().parse().map_err(|e: Error| Error::Config(e.to_string()))?;
            let count = count
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("recipe count {count:?} is not a non-negative integer")))?;
            Ok((family, count))
        })
        .collect()
}

fn bad(msg: String) -> Error {
    Error::Config(msg)
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::unit_cube(self.grid.resolution).map_err(|e| bad(e.to_string()))
    }

    pub fn family(&self) -> Result<WaveletFamily> {
        self.wavelet.family.parse().map_err(|e: Error| bad(e.to_string()))
    }

    pub fn filters(&self) -> Result<WaveletFilterPair> {
        let f = self.family()?;
        Ok(WaveletFilterPair::new(f, f.default_boundary()))
    }

    pub fn tree_geometry(&self) -> Result<TreeGeometry> {
        TreeGeometry::new(self.grid_spec()?, self.filters()?).map_err(|e| bad(e.to_string()))
    }

    pub fn condition(&self) -> Result<ConditionKind> {
        self.diffusion.condition.parse()
    }

    pub fn eval_split(&self) -> Result<SplitFilter> {
        self.eval.split.parse()
    }

    pub fn denoiser_training(&self, seed: u64) -> DenoiserTraining {
        DenoiserTraining {
            steps: self.diffusion.timesteps,
            buckets: self.diffusion.buckets,
            lambda: self.diffusion.lambda,
            dropout_p: self.diffusion.dropout,
            draws: self.diffusion.draws,
            seed,
        }
    }

    /// Re-checks every component constraint; violations are configuration
    /// errors.
    pub fn validate(&self) -> Result<()> {
        let geometry = self.tree_geometry()?;
        let rho = self.wavelet.rho;
        if !(rho > 0.0 && rho < 1.0) {
            return Err(bad(format!("wavelet.rho must lie in (0, 1), got {rho}")));
        }
        let recipe = parse_recipe(&self.corpus.recipe)?;
        let mut families: Vec<_> = recipe.iter().map(|(f, _)| *f).collect();
        families.sort();
        families.dedup();
        if families.len() != recipe.len() {
            return Err(bad("corpus.recipe lists a family twice".into()));
        }
        let tf = self.corpus.test_fraction;
        if !(tf > 0.0 && tf < 1.0) {
            return Err(bad(format!("corpus.test_fraction must lie in (0, 1), got {tf}")));
        }
        let c = &self.codec;
        if c.block == 0 || c.block > geometry.coarse_side() {
            return Err(bad(format!(
                "codec.block must lie in 1..={} for this grid, got {}",
                geometry.coarse_side(),
                c.block
            )));
        }
        let block_len = c.block.pow(3) * TREE_CHANNELS;
        if c.latent_dim == 0 || c.latent_dim > block_len {
            return Err(bad(format!("codec.latent_dim must lie in 1..={block_len}, got {}", c.latent_dim)));
        }
        if self.codebook.size > 0 && self.codebook.iters == 0 {
            return Err(bad("codebook.iters must be positive".into()));
        }
        let d = &self.diffusion;
        geometric_buckets(d.timesteps, d.buckets).map_err(|e| bad(format!("diffusion: {e}")))?;
        if !(d.lambda >= 0.0 && d.lambda.is_finite()) {
            return Err(bad(format!("diffusion.lambda must be non-negative, got {}", d.lambda)));
        }
        if !(0.0..1.0).contains(&d.dropout) {
            return Err(bad(format!("diffusion.dropout must lie in [0, 1), got {}", d.dropout)));
        }
        if d.draws == 0 {
            return Err(bad("diffusion.draws must be positive".into()));
        }
        if d.condition_points == 0 {
            return Err(bad("diffusion.condition_points must be positive".into()));
        }
        self.condition()?;
        let s = &self.sampler;
        uniform_steps(d.timesteps, s.steps).map_err(|e| bad(format!("sampler: {e}")))?;
        if !(s.scale >= 0.0 && s.scale.is_finite()) {
            return Err(bad(format!("sampler.scale must be finite and non-negative, got {}", s.scale)));
        }
        if s.snap && self.codebook.size == 0 {
            return Err(bad("sampler.snap needs a codebook (codebook.size > 0)".into()));
        }
        if self.eval.chamfer_samples == 0 {
            return Err(bad("eval.chamfer_samples must be positive".into()));
        }
        self.eval_split()?;
        Ok(())
    }
}
