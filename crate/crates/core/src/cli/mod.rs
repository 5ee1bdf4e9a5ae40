//! The `wavelat` command-line tool.
//!
//! Every subcommand reads its inputs from files and writes its outputs
//! atomically, and `pipeline` is literally a sequence of subcommand calls,
//! so a pipeline run can be reproduced step by step.

mod commands;
mod config;

pub use commands::*;
pub use config::{
    parse_recipe, CodebookConfig, CodecConfig, ConditionKind, CorpusConfig, DiffusionConfig, EvalConfig, GridConfig,
    PathsConfig, PipelineConfig, SamplerSection, SplitFilter, WaveletConfig,
};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::wavelet::WaveletFamily;

#[derive(Debug, Parser)]
#[command(name = "wavelat", version, about = "Wavelet-tree latent codecs and diffusion for TSDF shapes")]
pub struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; every stage derives its own stream from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// haar, cdf97 or bior68.
    #[arg(long, global = true)]
    pub wavelet: Option<String>,
    /// Grid resolution N of the unit-cube lattice.
    #[arg(long, global = true)]
    pub res: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus: shape files plus a split manifest.
    Corpus(CorpusArgs),
    /// Turn an OBJ mesh or a TOML shape into a TSDF grid.
    Voxelize(VoxelizeArgs),
    /// Three-level wavelet decomposition of a grid.
    Dwt(DwtArgs),
    /// Pack C0, D0 and D1 of a decomposition into a 64-channel tree.
    Pack(PackArgs),
    /// Fit the linear codec on the training trees of a manifest.
    FitCodec(FitCodecArgs),
    /// Fit the vector-quantization codebook on training latents.
    FitCodebook(FitCodebookArgs),
    /// Refit codec and codebook on a per-tag balanced sample.
    Finetune(FinetuneArgs),
    /// Encode a tree into a latent grid.
    Encode(EncodeArgs),
    /// Decode a latent grid back into a tree cropped to the grid's coarse side.
    Decode(DecodeArgs),
    /// Extract a point-cloud or voxel condition from a grid.
    Condition(ConditionArgs),
    /// Fit the per-bucket linear denoiser on training latents.
    TrainDenoiser(TrainDenoiserArgs),
    /// Generate shapes: noise, guided denoising, snapping, decoding, meshing.
    Sample(SampleArgs),
    /// Reconstruction metrics per shape and per dataset.
    Eval(EvalArgs),
    /// Run every stage on a manifest of shapes.
    Pipeline(PipelineArgs),
}

impl Cli {
    /// Configuration after the file and the global flags are applied.
    pub fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = &self.wavelet {
            cfg.wavelet.family = w.clone();
        }
        if let Some(n) = self.res {
            cfg.grid.resolution = n;
        }
        cfg.validate().map_err(|e| Error::param(e.to_string()))?;
        Ok(cfg)
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("WALA_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::param(format!("WALA_THREADS must be a non-negative integer, got {v:?}")))?;
    // a pool that already exists (repeated in-process runs) is kept
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Remark about a biorthogonal layout at 256³ whose coarse side is not the
/// 46³ reference.
pub fn layout_note(cfg: &PipelineConfig) -> Result<Option<String>> {
    if cfg.grid.resolution != REFERENCE_RES || cfg.family()? == WaveletFamily::Haar {
        return Ok(None);
    }
    let m = cfg.tree_geometry()?.coarse_side();
    Ok((m != REFERENCE_COARSE).then(|| {
        format!(
            "{} gives a {m}³ coarse grid at {REFERENCE_RES}³, not {REFERENCE_COARSE}³; bior68 reproduces the reference layout",
            cfg.wavelet.family
        )
    }))
}

const REFERENCE_RES: usize = 256;
const REFERENCE_COARSE: usize = 46;

pub fn execute(cli: &Cli) -> Result<()> {
    configure_threads()?;
    let cfg = cli.config()?;
    if let Some(note) = layout_note(&cfg)? {
        eprintln!("wavelat: note: {note}");
    }
    match &cli.command {
        Command::Corpus(a) => corpus(a, &cfg),
        Command::Voxelize(a) => voxelize(a, &cfg),
        Command::Dwt(a) => dwt(a, &cfg),
        Command::Pack(a) => pack(a, &cfg),
        Command::FitCodec(a) => fit_codec(a, &cfg),
        Command::FitCodebook(a) => fit_codebook(a, &cfg),
        Command::Finetune(a) => finetune(a, &cfg),
        Command::Encode(a) => encode(a, &cfg),
        Command::Decode(a) => decode(a, &cfg),
        Command::Condition(a) => condition(a, &cfg),
        Command::TrainDenoiser(a) => train_denoiser(a, &cfg),
        Command::Sample(a) => sample(a, &cfg),
        Command::Eval(a) => eval(a, &cfg),
        Command::Pipeline(a) => pipeline(a, &cfg).map(|summary| print!("{summary}")),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status: 0 success, 1 usage, 2 data, 3 numeric or fit.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("wavelat: {e}");
            e.exit_code()
        }
    }
}
