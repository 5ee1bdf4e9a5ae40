use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;

use super::config::{parse_recipe, ConditionKind, PipelineConfig, SplitFilter};
use crate::codec::{
    self, balanced_finetune, fit_codebook as fit_vq, latent_vectors, read_codebook, read_codec, read_latent, snap,
    write_codebook, write_codec, write_latent, Codebook, CoefficientWeights, LinearCodec,
};
use crate::dataset::{
    balanced_sample, encode_pointcloud_condition, generate_synthetic_corpus, read_manifest, split_corpus,
    voxel_condition, write_manifest, ManifestRecord, Split,
};
use crate::diffusion::{
    read_condition, read_denoiser, sample as run_sampler, train_denoiser as fit_denoiser, write_condition,
    write_denoiser, Condition, Denoiser, SamplerConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{
    marching_cubes, occupancy, read_obj, read_sdf, sample_surface_points, sdf_from_shape, voxelize_mesh, write_obj,
    write_sdf, SdfGrid, ShapeSpec, TriangleMesh,
};
use crate::io::{read_parsed, write_atomic};
use crate::metrics::{chamfer, grid_mse, iou, write_report, MetricReport, ReportRow};
use crate::rng::derive_seed;
use crate::wavelet::{
    dwt3, idwt3, importance_set_tree, pack_tree, read_decomposition, read_tree, unpack_tree, write_decomposition,
    write_tree, DiffusibleTree, TreeGeometry,
};

pub const MANIFEST_NAME: &str = "synthetic.tsv";

#[derive(Debug, Default, Args)]
pub struct CorpusArgs {
    /// Output directory for `synthetic.tsv` and `shapes/`.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated `family=count` pairs.
    #[arg(long)]
    pub recipe: Option<String>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Default, Args)]
pub struct VoxelizeArgs {
    /// `.obj` mesh or `.toml` shape description.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Default, Args)]
pub struct DwtArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub levels: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct PackArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Default, Args)]
pub struct FitCodecArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding `{id}.wtr` trees.
    #[arg(long)]
    pub trees: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub block: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Fit with uniform coefficient weights.
    #[arg(long)]
    pub unweighted: bool,
}

#[derive(Debug, Default, Args)]
pub struct FitCodebookArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding `{id}.lat` latents.
    #[arg(long)]
    pub latents: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub trees: PathBuf,
    #[arg(long)]
    pub codec: PathBuf,
    #[arg(long)]
    pub codebook: PathBuf,
    #[arg(long)]
    pub out_codec: PathBuf,
    #[arg(long)]
    pub out_codebook: PathBuf,
    /// Records drawn per dataset tag.
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub unweighted: bool,
}

#[derive(Debug, Default, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub codec: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Default, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub codec: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Snap the latent to this codebook before decoding.
    #[arg(long)]
    pub codebook: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct ConditionArgs {
    /// `SDF1` grid.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// pointcloud or voxel.
    #[arg(long)]
    pub kind: Option<String>,
    /// Surface samples for point-cloud conditions.
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct TrainDenoiserArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub latents: PathBuf,
    /// Directory holding `{id}.cnd` conditions; omitted trains unconditionally.
    #[arg(long)]
    pub conds: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Diffusion length T.
    #[arg(long)]
    pub timesteps: Option<usize>,
    #[arg(long)]
    pub buckets: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub draws: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub denoiser: PathBuf,
    #[arg(long)]
    pub codec: PathBuf,
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    /// `CND1` condition file.
    #[arg(long)]
    pub cond: Option<PathBuf>,
    /// Output directory for `sample-{i:03}.obj` and `sample-{i:03}.lat`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    /// Sampler steps, spread evenly over the diffusion length.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Guidance scale.
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long, conflicts_with = "no_snap")]
    pub snap: bool,
    #[arg(long)]
    pub no_snap: bool,
}

#[derive(Debug, Default, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding ground-truth `{id}.sdf` grids.
    #[arg(long)]
    pub grids: PathBuf,
    #[arg(long)]
    pub trees: PathBuf,
    #[arg(long)]
    pub codec: PathBuf,
    /// Quantize latents with this codebook before decoding.
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// train, test or all.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub chamfer_samples: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct PipelineArgs {
    /// Manifest whose paths point at `.obj` or `.toml` shapes.
    #[arg(long)]
    pub shapes: Option<PathBuf>,
    /// Working directory for every intermediate file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub scale: Option<f64>,
}

fn at(dir: &Path, id: &str, ext: &str) -> PathBuf {
    dir.join(format!("{id}.{ext}"))
}

fn select(records: Vec<ManifestRecord>, filter: SplitFilter) -> Vec<ManifestRecord> {
    records
        .into_iter()
        .filter(|r| match filter {
            SplitFilter::All => true,
            SplitFilter::Train => r.split == Split::Train,
            SplitFilter::Test => r.split == Split::Test,
        })
        .collect()
}

fn selected(manifest: &Path, filter: SplitFilter) -> Result<Vec<ManifestRecord>> {
    let records = select(read_manifest(manifest)?, filter);
    if records.is_empty() {
        return Err(Error::data(format!("{}: no records in the {filter:?} split", manifest.display())));
    }
    Ok(records)
}

fn load_all<T: Send>(ids: &[&str], dir: &Path, ext: &str, read: impl Fn(&Path) -> Result<T> + Sync) -> Result<Vec<T>> {
    ids.par_iter().map(|id| read(&at(dir, id, ext))).collect()
}

fn ids(records: &[ManifestRecord]) -> Vec<&str> {
    records.iter().map(|r| r.id.as_str()).collect()
}

fn check_trees(trees: &[DiffusibleTree], geometry: &TreeGeometry) -> Result<()> {
    match trees.iter().find(|t| t.side() != geometry.coarse_side()) {
        Some(t) => Err(Error::param(format!(
            "tree side {} does not match the coarse side {} of the configured grid",
            t.side(),
            geometry.coarse_side()
        ))),
        None => Ok(()),
    }
}

fn weights(
    trees: &[DiffusibleTree],
    geometry: &TreeGeometry,
    block: usize,
    rho: f64,
    weighted: bool,
) -> Result<CoefficientWeights> {
    if !weighted {
        return Ok(CoefficientWeights::uniform(block));
    }
    let sets = trees
        .par_iter()
        .map(|t| importance_set_tree(t, geometry.d1_side(), rho))
        .collect::<Result<Vec<_>>>()?;
    CoefficientWeights::adaptive(trees, &sets, block)
}

fn reconstruct(tree: &DiffusibleTree, geometry: &TreeGeometry) -> Result<SdfGrid> {
    idwt3(&unpack_tree(tree, geometry)?, &geometry.filters)
}

fn decoded_tree(codec: &LinearCodec, latent: &codec::LatentGrid, geometry: &TreeGeometry) -> Result<DiffusibleTree> {
    Ok(codec::decode(codec, latent)?.resized(geometry.coarse_side()))
}

/// Zero-level surface, or an empty mesh when the grid has no sign change.
fn surface(grid: &SdfGrid) -> Result<TriangleMesh> {
    match marching_cubes(grid, 0.0) {
        Err(Error::EmptySurface { .. }) => Ok(TriangleMesh::default()),
        other => other,
    }
}

pub fn corpus(a: &CorpusArgs, cfg: &PipelineConfig) -> Result<()> {
    let recipe = parse_recipe(a.recipe.as_deref().unwrap_or(&cfg.corpus.recipe)).map_err(|e| Error::param(e.to_string()))?;
    let spec = cfg.grid_spec()?;
    let shapes = generate_synthetic_corpus(&recipe, &spec, cfg.seed)?;
    let (specs, records): (Vec<ShapeSpec>, Vec<ManifestRecord>) = shapes.into_iter().unzip();
    let records = split_corpus(records, a.test_fraction.unwrap_or(cfg.corpus.test_fraction), cfg.seed)?;
    specs.par_iter().zip(&records).try_for_each(|(s, r)| {
        let text = toml::to_string(s).map_err(|e| Error::data(format!("{}: {e}", r.id)))?;
        write_atomic(&r.resolve(&a.out), text.as_bytes())
    })?;
    write_manifest(&a.out.join(MANIFEST_NAME), &records)
}

pub fn read_shape(path: &Path) -> Result<ShapeSpec> {
    read_parsed(path, |bytes| {
        let text = std::str::from_utf8(bytes).map_err(|_| Error::data("shape file is not UTF-8"))?;
        let shape: ShapeSpec = toml::from_str(text).map_err(|e| Error::data(e.to_string()))?;
        shape.validate().map_err(|e| Error::data(e.to_string()))?;
        Ok(shape)
    })
}

pub fn voxelize(a: &VoxelizeArgs, cfg: &PipelineConfig) -> Result<()> {
    let spec = cfg.grid_spec()?;
    let grid = match a.input.extension().and_then(|e| e.to_str()) {
        Some("obj") => voxelize_mesh(&read_obj(&a.input)?, &spec)
            .map_err(|e| Error::Geometry(format!("{}: {e}", a.input.display())))?,
        Some("toml") => sdf_from_shape(&read_shape(&a.input)?, &spec)?,
        _ => {
            return Err(Error::param(format!(
                "{}: expected an .obj mesh or a .toml shape",
                a.input.display()
            )))
        }
    };
    write_sdf(&a.out, &grid)
}

pub fn dwt(a: &DwtArgs, cfg: &PipelineConfig) -> Result<()> {
    let grid = read_sdf(&a.input)?;
    let levels = a.levels.unwrap_or(TreeGeometry::LEVELS);
    write_decomposition(&a.out, &dwt3(&grid, &cfg.filters()?, levels)?)
}

pub fn pack(a: &PackArgs, _cfg: &PipelineConfig) -> Result<()> {
    write_tree(&a.out, &pack_tree(&read_decomposition(&a.input)?)?)
}

pub fn fit_codec(a: &FitCodecArgs, cfg: &PipelineConfig) -> Result<()> {
    let geometry = cfg.tree_geometry()?;
    let records = selected(&a.manifest, SplitFilter::Train)?;
    let trees = load_all(&ids(&records), &a.trees, "wtr", read_tree)?;
    check_trees(&trees, &geometry)?;
    let block = a.block.unwrap_or(cfg.codec.block);
    let rho = a.rho.unwrap_or(cfg.wavelet.rho);
    let w = weights(&trees, &geometry, block, rho, cfg.codec.weighted && !a.unweighted)?;
    let codec = codec::fit_codec(&trees, block, a.dim.unwrap_or(cfg.codec.latent_dim), &w)?;
    write_codec(&a.out, &codec)
}

pub fn fit_codebook(a: &FitCodebookArgs, cfg: &PipelineConfig) -> Result<()> {
    let records = selected(&a.manifest, SplitFilter::Train)?;
    let latents = load_all(&ids(&records), &a.latents, "lat", read_latent)?;
    let dim = latents[0].dim();
    if latents.iter().any(|z| z.dim() != dim) {
        return Err(Error::data("training latents have different cell dimensions"));
    }
    let size = a.size.unwrap_or(cfg.codebook.size);
    let iters = a.iters.unwrap_or(cfg.codebook.iters);
    let fit = fit_vq(&latent_vectors(&latents), dim, size, iters, derive_seed(cfg.seed, "codebook"))?;
    write_codebook(&a.out, &fit.codebook)
}

pub fn finetune(a: &FinetuneArgs, cfg: &PipelineConfig) -> Result<()> {
    let geometry = cfg.tree_geometry()?;
    let codec = read_codec(&a.codec)?;
    let book = read_codebook(&a.codebook)?;
    let records = selected(&a.manifest, SplitFilter::Train)?;
    let cap = a.cap.unwrap_or(cfg.codec.finetune_cap);
    let balanced = balanced_sample(&records, cap, derive_seed(cfg.seed, "finetune"))?;
    let mut unique: Vec<&str> = balanced.iter().map(|r| r.id.as_str()).collect();
    unique.sort_unstable();
    unique.dedup();
    let loaded = load_all(&unique, &a.trees, "wtr", read_tree)?;
    let by_id: HashMap<&str, &DiffusibleTree> = unique.iter().copied().zip(&loaded).collect();
    let trees: Vec<DiffusibleTree> = balanced.iter().map(|r| by_id[r.id.as_str()].clone()).collect();
    check_trees(&trees, &geometry)?;
    let rho = a.rho.unwrap_or(cfg.wavelet.rho);
    let w = weights(&trees, &geometry, codec.block(), rho, cfg.codec.weighted && !a.unweighted)?;
    let iters = a.iters.unwrap_or(cfg.codec.finetune_iters);
    let (codec, book) = balanced_finetune(&codec, &book, &trees, &w, iters)?;
    write_codec(&a.out_codec, &codec)?;
    write_codebook(&a.out_codebook, &book)
}

pub fn encode(a: &EncodeArgs, _cfg: &PipelineConfig) -> Result<()> {
    let codec = read_codec(&a.codec)?;
    write_latent(&a.out, &codec::encode(&codec, &read_tree(&a.input)?)?)
}

pub fn decode(a: &DecodeArgs, cfg: &PipelineConfig) -> Result<()> {
    let geometry = cfg.tree_geometry()?;
    let codec = read_codec(&a.codec)?;
    let mut latent = read_latent(&a.input)?;
    if let Some(path) = &a.codebook {
        latent = snap(&latent, &read_codebook(path)?)?;
    }
    write_tree(&a.out, &decoded_tree(&codec, &latent, &geometry)?)
}

pub fn condition(a: &ConditionArgs, cfg: &PipelineConfig) -> Result<()> {
    let kind: ConditionKind = match &a.kind {
        Some(k) => k.parse().map_err(|e: Error| Error::param(e.to_string()))?,
        None => cfg.condition()?,
    };
    let grid = read_sdf(&a.input)?;
    let c = match kind {
        ConditionKind::None => Condition::None,
        ConditionKind::PointCloud => {
            let mesh = marching_cubes(&grid, 0.0)?;
            let n = a.points.unwrap_or(cfg.diffusion.condition_points);
            encode_pointcloud_condition(&sample_surface_points(&mesh, n, derive_seed(cfg.seed, "condition"))?)?
        }
        ConditionKind::Voxel => voxel_condition(&occupancy(&grid))?,
    };
    write_condition(&a.out, &c)
}

pub fn train_denoiser(a: &TrainDenoiserArgs, cfg: &PipelineConfig) -> Result<()> {
    let records = selected(&a.manifest, SplitFilter::Train)?;
    let ids = ids(&records);
    let latents = load_all(&ids, &a.latents, "lat", read_latent)?;
    let conds = match &a.conds {
        Some(dir) => load_all(&ids, dir, "cnd", read_condition)?,
        None => vec![Condition::None; latents.len()],
    };
    let mut training = cfg.denoiser_training(derive_seed(cfg.seed, "denoiser"));
    training.steps = a.timesteps.unwrap_or(training.steps);
    training.buckets = a.buckets.unwrap_or(training.buckets);
    training.lambda = a.lambda.unwrap_or(training.lambda);
    training.dropout_p = a.dropout.unwrap_or(training.dropout_p);
    training.draws = a.draws.unwrap_or(training.draws);
    let pairs: Vec<_> = latents.into_iter().zip(conds).collect();
    write_denoiser(&a.out, &fit_denoiser(&pairs, &training)?)
}

pub fn sample(a: &SampleArgs, cfg: &PipelineConfig) -> Result<()> {
    let geometry = cfg.tree_geometry()?;
    let denoiser = read_denoiser(&a.denoiser)?;
    let codec = read_codec(&a.codec)?;
    let book: Option<Codebook> = a.codebook.as_deref().map(read_codebook).transpose()?;
    let cond = match &a.cond {
        Some(p) => read_condition(p)?,
        None => Condition::None,
    };
    let snap_output = if a.snap {
        true
    } else if a.no_snap {
        false
    } else {
        cfg.sampler.snap && book.is_some()
    };
    let t_max = denoiser.schedule().steps();
    let steps = a.steps.unwrap_or(cfg.sampler.steps);
    let scale = a.scale.unwrap_or(cfg.sampler.scale);
    let count = a.count.unwrap_or(cfg.sampler.count);
    (0..count).into_par_iter().try_for_each(|i| {
        let seed = derive_seed(cfg.seed, &format!("sample/{i}"));
        let config = SamplerConfig::uniform(t_max, steps, scale, seed, snap_output)?;
        let z = run_sampler(&denoiser, &cond, &config, book.as_ref())?;
        let name = format!("sample-{i:03}");
        write_latent(&at(&a.out, &name, "lat"), &z)?;
        let grid = reconstruct(&decoded_tree(&codec, &z, &geometry)?, &geometry)?;
        write_obj(&at(&a.out, &name, "obj"), &surface(&grid)?)
    })
}

fn eval_row(
    r: &ManifestRecord,
    a: &EvalArgs,
    codec: &LinearCodec,
    book: Option<&Codebook>,
    geometry: &TreeGeometry,
    samples: usize,
    seed: u64,
) -> Result<ReportRow> {
    let truth = read_sdf(&at(&a.grids, &r.id, "sdf"))?;
    if truth.spec() != &geometry.spec {
        return Err(Error::data(format!("{}: grid does not match the configured lattice", r.id)));
    }
    let tree = read_tree(&at(&a.trees, &r.id, "wtr"))?;
    check_trees(std::slice::from_ref(&tree), geometry)?;
    let mut latent = codec::encode(codec, &tree)?;
    if let Some(b) = book {
        latent = snap(&latent, b)?;
    }
    let recon = reconstruct(&decoded_tree(codec, &latent, geometry)?, geometry)?;
    let packed = reconstruct(&tree, geometry)?;
    let (s_truth, s_recon) = (surface(&truth)?, surface(&recon)?);
    let cd = if s_truth.is_empty() || s_recon.is_empty() {
        None
    } else {
        Some(chamfer(&s_truth, &s_recon, samples, derive_seed(seed, &format!("chamfer/{}", r.id)))?)
    };
    Ok(ReportRow {
        id: r.id.clone(),
        dataset_tag: r.dataset_tag.clone(),
        iou: iou(&occupancy(&truth), &occupancy(&recon))?,
        chamfer: cd,
        mse: grid_mse(&truth, &recon)?,
        codec_iou: Some(iou(&occupancy(&packed), &occupancy(&recon))?),
    })
}

pub fn eval(a: &EvalArgs, cfg: &PipelineConfig) -> Result<()> {
    let geometry = cfg.tree_geometry()?;
    let filter = match &a.split {
        Some(s) => s.parse().map_err(|e: Error| Error::param(e.to_string()))?,
        None => cfg.eval_split()?,
    };
    let records = selected(&a.manifest, filter)?;
    let codec = read_codec(&a.codec)?;
    let book = a.codebook.as_deref().map(read_codebook).transpose()?;
    let samples = a.chamfer_samples.unwrap_or(cfg.eval.chamfer_samples);
    let seed = derive_seed(cfg.seed, "eval");
    let rows = records
        .par_iter()
        .map(|r| eval_row(r, a, &codec, book.as_ref(), &geometry, samples, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut report = MetricReport::new(rows);
    report.chamfer_samples = samples;
    write_report(&a.out, &report)
}

/// Runs every stage through the subcommand functions and returns a short
/// summary of the report.
///
/// Layout under the output directory: `grids/`, `decomps/`, `trees/`,
/// `codec.lc`, `latents/`, `codebook.cb`, the balanced `codec-ft.lc`,
/// `codebook-ft.cb` and `latents-ft/` when fine-tuning is enabled,
/// `conds/`, `denoiser.dn`, `samples/`, `report.tsv` and the effective
/// `config.toml`.
pub fn pipeline(a: &PipelineArgs, cfg: &PipelineConfig) -> Result<String> {
    let mut cfg = cfg.clone();
    if let Some(s) = a.steps {
        cfg.sampler.steps = s;
    }
    if let Some(s) = a.scale {
        cfg.sampler.scale = s;
    }
    cfg.validate().map_err(|e| Error::param(e.to_string()))?;
    let cfg = &cfg;
    let shapes = a
        .shapes
        .clone()
        .or_else(|| cfg.paths.shapes.clone())
        .ok_or_else(|| Error::param("pipeline needs --shapes or paths.shapes"))?;
    let out = a
        .out
        .clone()
        .or_else(|| cfg.paths.out.clone())
        .ok_or_else(|| Error::param("pipeline needs --out or paths.out"))?;
    let records = read_manifest(&shapes)?;
    if records.is_empty() {
        return Err(Error::data(format!("{}: manifest is empty", shapes.display())));
    }
    let base = shapes.parent().unwrap_or(Path::new("."));
    let dir = |name: &str| out.join(name);
    write_atomic(&dir("config.toml"), cfg.to_toml().as_bytes())?;

    records.par_iter().try_for_each(|r| {
        let grid = at(&dir("grids"), &r.id, "sdf");
        let decomp = at(&dir("decomps"), &r.id, "wdc");
        voxelize(&VoxelizeArgs { input: r.resolve(base), out: grid.clone() }, cfg)?;
        dwt(&DwtArgs { input: grid, out: decomp.clone(), levels: None }, cfg)?;
        pack(&PackArgs { input: decomp, out: at(&dir("trees"), &r.id, "wtr") }, cfg)
    })?;

    let encode_all = |codec: &Path, latents: &Path| -> Result<()> {
        records.par_iter().try_for_each(|r| {
            let args = EncodeArgs {
                codec: codec.to_path_buf(),
                input: at(&dir("trees"), &r.id, "wtr"),
                out: at(latents, &r.id, "lat"),
            };
            encode(&args, cfg)
        })
    };
    fit_codec(
        &FitCodecArgs { manifest: shapes.clone(), trees: dir("trees"), out: dir("codec.lc"), ..Default::default() },
        cfg,
    )?;
    encode_all(&dir("codec.lc"), &dir("latents"))?;
    let mut codec_path = dir("codec.lc");
    let mut latents = dir("latents");
    let mut book_path = None;
    if cfg.codebook.size > 0 {
        let args = FitCodebookArgs {
            manifest: shapes.clone(),
            latents: latents.clone(),
            out: dir("codebook.cb"),
            ..Default::default()
        };
        fit_codebook(&args, cfg)?;
        book_path = Some(dir("codebook.cb"));
        if cfg.codec.finetune_cap > 0 {
            let args = FinetuneArgs {
                manifest: shapes.clone(),
                trees: dir("trees"),
                codec: codec_path.clone(),
                codebook: dir("codebook.cb"),
                out_codec: dir("codec-ft.lc"),
                out_codebook: dir("codebook-ft.cb"),
                ..Default::default()
            };
            finetune(&args, cfg)?;
            codec_path = dir("codec-ft.lc");
            book_path = Some(dir("codebook-ft.cb"));
            latents = dir("latents-ft");
            encode_all(&codec_path, &latents)?;
        }
    }

    let kind = cfg.condition()?;
    if kind != ConditionKind::None {
        records.par_iter().try_for_each(|r| {
            let args = ConditionArgs {
                input: at(&dir("grids"), &r.id, "sdf"),
                out: at(&dir("conds"), &r.id, "cnd"),
                ..Default::default()
            };
            condition(&args, cfg)
        })?;
    }

    let eval_split = cfg.eval_split()?;
    if cfg.sampler.count > 0 {
        let conds = (kind != ConditionKind::None).then(|| dir("conds"));
        let args = TrainDenoiserArgs {
            manifest: shapes.clone(),
            latents: latents.clone(),
            conds: conds.clone(),
            out: dir("denoiser.dn"),
            ..Default::default()
        };
        train_denoiser(&args, cfg)?;
        // conditioned runs follow the first evaluated shape
        let cond = match &conds {
            Some(c) => {
                let first = select(records.clone(), eval_split)
                    .into_iter()
                    .next()
                    .unwrap_or_else(|| records[0].clone());
                Some(at(c, &first.id, "cnd"))
            }
            None => None,
        };
        let args = SampleArgs {
            denoiser: dir("denoiser.dn"),
            codec: codec_path.clone(),
            codebook: book_path.clone(),
            cond,
            out: dir("samples"),
            ..Default::default()
        };
        sample(&args, cfg)?;
    }

    let args = EvalArgs {
        manifest: shapes.clone(),
        grids: dir("grids"),
        trees: dir("trees"),
        codec: codec_path,
        codebook: book_path,
        out: dir("report.tsv"),
        ..Default::default()
    };
    eval(&args, cfg)?;

    let report = crate::metrics::read_report(&dir("report.tsv"))?;
    let agg = report.aggregates()?;
    let mut s = String::new();
    let _ = writeln!(s, "shapes\t{}", records.len());
    let _ = writeln!(s, "evaluated\t{}", agg.rows);
    let _ = writeln!(s, "mean_iou\t{}", agg.mean_iou);
    let _ = writeln!(s, "d_iou\t{}", agg.d_iou);
    let _ = writeln!(s, "mean_chamfer\t{}", agg.mean_chamfer);
    let _ = writeln!(s, "report\t{}", dir("report.tsv").display());
    Ok(s)
}
