use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng;
use crate::wavelet::{DiffusibleTree, ImportanceSet};

fn mse_at(a: &[f64], b: &[f64], slots: impl Iterator<Item = usize>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in slots {
        let d = a[s] - b[s];
        sum += d * d;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Adaptive-sampling reconstruction loss between a tree and its
/// reconstruction:
///
/// ```text
/// L = MSE(C0, C0′) + ½ Σ_{D ∈ {D0, D1}} [ MSE(D[P0], D′[P0]) + MSE(R(D[P0′]), R(D′[P0′])) ]
/// ```
///
/// `P0` covers all seven subbands of a level. `R` draws `|P0|` slots of `P0′`
/// uniformly without replacement (all of `P0′` when it is smaller), one
/// draw per level shared by both trees. D0 draws first, then D1, from a
/// stream seeded by `seed`. Mean squared errors over empty sets count as 0.
pub fn adaptive_recon_loss(
    w: &DiffusibleTree,
    w_rec: &DiffusibleTree,
    p0: &ImportanceSet,
    seed: u64,
) -> Result<f64> {
    if w.side() != w_rec.side() {
        return Err(Error::param(format!(
            "tree sides differ: {} vs {}",
            w.side(),
            w_rec.side()
        )));
    }
    let m = w.side();
    if p0.d0.side != m || p0.d1.side > 2 * m {
        return Err(Error::param("importance set does not belong to trees of this side"));
    }
    let (a, b) = (w.data(), w_rec.data());
    let mut loss = mse_at(a, b, 0..m.pow(3));
    let mut rng = rng::rng(seed);
    for level in 0..2 {
        let (imp, rest) = p0.tree_slots(level, m);
        let take = imp.len().min(rest.len());
        let picked = index::sample(&mut rng, rest.len(), take);
        let sampled = mse_at(a, b, picked.iter().map(|i| rest[i]));
        loss += 0.5 * (mse_at(a, b, imp.iter().copied()) + sampled);
    }
    Ok(loss)
}
