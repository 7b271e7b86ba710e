//! Pairwise judging of candidate annotations on front-view projections.

pub mod benchmark;
pub mod external;
pub mod judge;
pub mod prior;
pub mod tournament;

pub use benchmark::{judge_benchmark, BenchmarkPair, BenchmarkReport, Tally};
pub use external::{rle_decode, rle_encode, ExternalJudge, JudgePairRequest, JudgePairResponse};
pub use judge::{judge_pair, Judge, JudgeVerdict, PairRequest, Preference, Rationale, RuleJudge};
pub use prior::{
    criterion_scores, overlay_features, score_overlay, AnatomicalPrior, CentroidBox, CriterionScores,
    CriterionWeights, OverlayFeatures, PriorTable,
};
pub use tournament::{run_tournament, shape_cleanup, Round, TournamentResult, Vote};
