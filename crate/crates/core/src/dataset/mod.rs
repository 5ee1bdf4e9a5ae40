//! Shape corpora: synthetic generation, manifests, splits, balanced
//! sampling, rotation augmentation and condition features.

mod augment;
mod conditions;
mod corpus;
mod manifest;

pub use augment::{rotate_augment, rotate_lattice, rotate_points, rotate_tree, RotateAugment};
pub use conditions::{
    encode_pointcloud_condition, encode_voxel_condition, voxel_condition, HISTOGRAM_BINS, POINTCLOUD_DIM,
    VOXEL_CONDITION_RES, VOXEL_DIM,
};
pub use corpus::{generate_synthetic_corpus, Family};
pub use manifest::{
    balanced_sample, manifest_text, parse_manifest, read_manifest, split_corpus, write_manifest, ManifestRecord,
    Split, DEFAULT_TEST_FRACTION,
};
