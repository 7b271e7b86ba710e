//! The alternating refinement loop.

pub mod config;
pub mod expectation;
pub mod maximization;
pub mod oracle;
pub mod run;

pub use config::{Convergence, DataMix, EmConfig};
pub use expectation::{count_changed, expectation_pass, ActionCounts, ExpectationOutput, ExpectationStats, ExpertContext};
pub use maximization::{allocate_duplicates, case_losses, maximization_pass, plan_mix, TrainingMix};
pub use oracle::{
    candidate_overlays, interactive_review, render_entry, EscalationEntry, EscalationQueue, EscalationReason,
    HumanOracle, InteractiveCli, Resolutions, ReviewDecision, ReviewItem, SimulatedExpert, TieKeeper,
};
pub use run::{gold_agreement, persist_run, run_em, EmRun, EscalationFile, ModelSnapshot, GoldAgreement, IterationArtifacts, IterationReport, StructureDsc};
