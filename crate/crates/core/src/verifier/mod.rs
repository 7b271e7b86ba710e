//! Model-consistency audit of annotations and the replacement rule.

pub mod audit;
pub mod model;

pub use audit::{
    apply_update_rule, apply_update_with, audit_against, audit_case, predict_for_case, replace_structure,
    AuditAction, AuditOutcome, AuditThresholds, ChangeLog, ChangeRecord, StructureAudit,
};
pub use model::{
    fit_model, BackgroundFit, GaussianFit, GaussianIntensityModel, ModelAccumulator, PriorBox,
    SegmentationModel, StructureModel, DEFAULT_MIN_TUMOR_VOXELS, STD_FLOOR,
};
