//! Corpus representation, label binning, feature normalization, on-disk
//! formats and the synthetic corpus generator.

mod corpus;
mod labels;
mod manifest;
mod norm;
mod synth;

pub use corpus::{Corpus, Utterance};
pub use labels::{bin_annotation, majority_label, LabelBin};
pub use manifest::{load_corpus, save_corpus, LoadReport, ManifestEntry, ManifestFile, MANIFEST_VERSION};
pub use norm::{apply_znorm, fit_norm_stats, pad_batch, NormStats, PaddedBatch};
pub use synth::{generate_synthetic, LabelMapMode, SyntheticSpec};
