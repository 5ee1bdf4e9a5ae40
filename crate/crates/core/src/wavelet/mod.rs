//! Separable 3-D wavelet transforms, the packed 64-channel tree and
//! importance-driven coefficient filtering.

mod dwt;
mod filters;
mod format;
mod importance;
mod tree;

pub use dwt::{
    analyze_once, dwt3, dwt3_values, idwt3, idwt3_values, level_sides, synthesize_once, Volume,
    WaveletDecomposition,
};
pub use format::{decomposition_bytes, parse_decomposition, read_decomposition, write_decomposition};
pub use filters::{Boundary, WaveletFamily, WaveletFilterPair};
pub use importance::{importance_set, importance_set_tree, subband_filter, threshold, ImportanceSet, LevelImportance, DEFAULT_RHO};
pub use tree::{
    d0_slot, d1_slot, pack_tree, parse_tree, read_tree, tree_bytes, unpack_tree, write_tree, DiffusibleTree,
    TreeGeometry, SUBBANDS, TREE_CHANNELS,
};
