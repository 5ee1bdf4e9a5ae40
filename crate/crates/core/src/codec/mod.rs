//! Linear block codec from wavelet trees to small latent grids, plus vector
//! quantization and the adaptive reconstruction loss.

mod latent;
mod linear;
mod loss;
mod vq;

pub use latent::{compression_ratio, latent_bytes, parse_latent, read_latent, write_latent, LatentGrid};
pub use linear::{
    codec_bytes, decode, encode, fit_codec, padded_side, parse_codec, read_codec, tree_blocks, write_codec,
    CoefficientWeights, FitMeta, LinearCodec,
};
pub use loss::adaptive_recon_loss;
pub use vq::{
    codebook_bytes, dequantize, fit_codebook, lloyd, parse_codebook, quantize, read_codebook, snap, write_codebook,
    Codebook, CodebookFit, QuantizedLatent, VqLosses,
};

use crate::error::{Error, Result};
use crate::wavelet::DiffusibleTree;

/// Cell vectors of every latent, concatenated row-major.
pub fn latent_vectors<'a>(latents: impl IntoIterator<Item = &'a LatentGrid>) -> Vec<f64> {
    latents.into_iter().flat_map(|z| z.values().iter().copied()).collect()
}

/// Refits the codec on a balanced set, starting from the current solution,
/// then resumes Lloyd iterations from the current codebook on the balanced
/// latents.
///
/// The refitted basis is rotated onto the old one so existing codebook
/// entries stay meaningful.
pub fn balanced_finetune(
    codec: &LinearCodec,
    codebook: &Codebook,
    balanced_trees: &[DiffusibleTree],
    weights: &CoefficientWeights,
    iters: usize,
) -> Result<(LinearCodec, Codebook)> {
    if balanced_trees.is_empty() {
        return Err(Error::fit("balanced fine-tuning needs at least one tree"));
    }
    let tuned = linear::refit_aligned(codec, balanced_trees, weights)?;
    let latents = balanced_trees
        .iter()
        .map(|t| encode(&tuned, t))
        .collect::<Result<Vec<_>>>()?;
    let fit = lloyd(&latent_vectors(&latents), codebook.clone(), iters)?;
    Ok((tuned, fit.codebook))
}
