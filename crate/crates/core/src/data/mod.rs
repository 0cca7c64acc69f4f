//! Synthetic source/target corpora, splitting and the on-disk format.

mod dataset;
mod pdds;
mod synth;

pub use dataset::{largest_remainder, split, subsample_target, LabeledDataset, Sample, Split};
pub use pdds::{decode_dataset, encode_dataset, read_dataset, write_dataset};
pub use synth::{synth_generate, ArtifactKind, DomainConfig, GapSet};
