//! Evaluation quantities: overlap and surface Dice, detection rates, diagnosis
//! confusion matrices and ROC curves.

pub mod detection;
pub mod diagnosis;
pub mod overlap;
pub mod rates;
pub mod report;
pub mod roc_curve;
pub mod surface;

pub use detection::{
    patient_wise_detection, tumor_wise_detection, tumor_wise_detection_filtered, DetectionOutcome,
};
pub use diagnosis::{diagnosis_confusion, DiagnosisConfusion};
pub use overlap::{dice_from_counts, dsc};
pub use rates::{classification_rates, ClassificationRates, ConfusionCounts};
pub use report::{evaluate_corpus, evaluate_maps, CorpusEvaluation, MetricReport, StructureMetrics, Summary};
pub use roc_curve::{build_roc, threshold_grid, RocCurve, RocOptions, RocPoint};
pub use surface::{nsd, squared_distance_transform, surface_voxels, SurfaceDistanceSpec, DEFAULT_TOLERANCE_MM};
