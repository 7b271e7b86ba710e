//! Tumor probability maps, threshold selection, report-based suppression and
//! the annotation cost model.

pub mod pipeline;
pub mod prob;
pub mod workflow;

pub use pipeline::{gold_tumor_mask, split_by_gold, tumor_probability, tumor_workflow, TumorWorkflow};
pub use prob::ProbabilityMap;
pub use workflow::{
    annotation_savings, process_case, select_threshold, simulate_fp_erasure, suppress_fp_by_report, CaseCost,
    CostModel, Erasure, SavingsReport, ThresholdPolicy,
};
