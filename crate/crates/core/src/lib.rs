//! Fingerprint recognition with translation-invariant scattering features.
//!
//! The pipeline is split into stages that can be used independently:
//!
//! * [`imageio`] loads and resizes images and reads dataset manifests.
//! * [`filterbank`] builds Morlet band-pass filters and the Gaussian low-pass.
//! * [`scattering`] runs the wavelet/modulus/averaging cascade and pools each
//!   map into a (mean, variance) pair.
//! * [`pca`] fits principal components on training features.
//! * [`svm`] trains soft-margin SVMs with SMO and combines them one-vs-all.
//! * [`eval`] computes identification accuracy, FAR/FRR curves and the EER.

pub mod error;
pub mod eval;
pub mod filterbank;
pub mod imageio;
pub mod pca;
pub mod scattering;
pub mod svm;
pub mod synth;

mod binio;

pub use error::{Error, Result};
pub use eval::{EvalReport, ScoreSet};
pub use filterbank::{FilterBank, MorletConfig};
pub use imageio::{DatasetManifest, GrayImage, ManifestEntry, Split};
pub use pca::PcaModel;
pub use scattering::{FeatureVector, ScatteringPath, ScatteringResult};
pub use svm::{BinarySvmModel, Kernel, MulticlassSvmModel, SvmParams};
