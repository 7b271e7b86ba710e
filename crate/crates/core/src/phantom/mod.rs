//! Synthetic phantom corpora and annotation-noise injection.

pub mod generate;
pub mod noise;
pub mod rng;
pub mod spec;

pub use generate::{case_id, generate_augmented_case, generate_case, generate_corpus, gold_count, Corpus};
pub use noise::{inject_noise, sample_op, InjectionLog, NoiseOp, OpKind};
pub use spec::{
    AnatomyJitter, AugmentSpec, Intensity, NoiseOverride, NoiseRates, NoiseSpec, PhantomSpec, Shape,
    StructureSpec, TumorSpec,
};
