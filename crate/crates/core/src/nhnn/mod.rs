//! Model assembly: the dilated CNN baseline, the multi-task CNN, and the
//! hierarchical model whose per-cluster heads are mixed by mixture
//! responsibilities.
//!
//! Heads are warm-started from a trained base model and fine-tuned on the
//! training utterances hard-assigned to their cluster. At inference the
//! heads' class distributions are mixed softly.

mod arch;
mod cluster;
mod model;
mod mtl;
mod train;

pub use arch::{Classifier, DcnnArch, DcnnModel, Encoder, Head};
pub use cluster::{fit_clusters, ClusterConfig, ClusterFit, ClusterModel};
pub use model::{
    build_nhnn, finetune_heads, label_of, mix, predict_label, predict_weighted, train_nhnn, FinetuneReport,
    NhnnModel, NhnnTrainReport, Variant, BUNDLE_VERSION,
};
pub use mtl::{train_mtl_cnn, MtlCnn};
pub use train::{train_base_dcnn, EpochRecord, TrainLog, TrainingConfig};
