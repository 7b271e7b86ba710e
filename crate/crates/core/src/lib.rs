//! Iterative co-refinement of voxel annotations and a segmentation model:
//! phantom corpora, overlap metrics, a model-consistency audit, an
//! anatomical-prior judge, a sensitivity-first ROC workflow and the
//! alternating refinement loop tying them together.

pub mod config;
pub mod em;
pub mod error;
pub mod expert;
pub mod metrics;
pub mod phantom;
pub mod roc;
pub mod scalar;
pub mod verifier;
pub mod volume;

pub use error::{Error, Result};
pub use scalar::Real;

/// Intensity volume as stored on disk.
pub type Volume = volume::VoxelGrid<f32>;
/// Per-voxel tumor probabilities as produced by the model.
pub type ProbMap = roc::ProbabilityMap<f32>;
pub type RocCurve = metrics::RocCurve<f64>;
pub type RocPoint = metrics::RocPoint<f64>;
pub type Rates = metrics::ClassificationRates<f64>;
pub type ThresholdPolicy = roc::ThresholdPolicy<f64>;
