//! Nonparametric hierarchical neural networks for speech emotion recognition.
//!
//! A truncated stick-breaking Dirichlet-process Gaussian mixture is fitted to
//! utterance-level summary features. Each surviving mixture component owns a
//! classifier head on top of a shared dilated-convolution encoder, and the
//! heads' softmax outputs are mixed by the posterior component
//! responsibilities of the utterance.
//!
//! The numeric kernels ([`neural`], [`dpgmm`], [`special`]) are generic over
//! [`Scalar`]; the pipeline modules work in `f64`. The aliases below name the
//! double-precision instantiations used throughout the pipeline.

pub mod commands;
pub mod dataio;
pub mod dpgmm;
pub mod error;
pub mod evaluation;
pub mod neural;
pub mod nhnn;
pub mod scalar;
pub mod special;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = neural::Tensor<f64>;
pub type DilatedConv1d = neural::DilatedConv1d<f64>;
pub type Dense = neural::Dense<f64>;
pub type Adam = neural::Adam<f64>;
pub type DpGmmPrior = dpgmm::DpGmmPrior<f64>;
pub type DpGmmModel = dpgmm::DpGmmModel<f64>;
pub type Responsibilities = dpgmm::Responsibilities<f64>;
pub type Encoder = nhnn::Encoder<f64>;
pub type Classifier = nhnn::Classifier<f64>;
pub type DcnnModel = nhnn::DcnnModel<f64>;
pub type MtlCnn = nhnn::MtlCnn<f64>;
pub use nhnn::NhnnModel;

/// Lower bound applied to every variance and standard deviation.
pub const VARIANCE_FLOOR: f64 = 1e-8;
