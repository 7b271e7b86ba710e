use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::EmConfig;
use crate::error::{Error, Result};
use crate::phantom::rng::{derive_seed, stream_rng, Stream};
use crate::phantom::{generate_augmented_case, PhantomSpec};
use crate::verifier::{AuditOutcome, GaussianIntensityModel, ModelAccumulator};
use crate::volume::{CaseRecord, StructureCatalog};

/// Composition of one training multiset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMix {
    /// Corpus indices drawn as labeled samples, ascending.
    pub labeled: Vec<usize>,
    pub synthetic: usize,
    /// `(corpus index, extra copies)`, only nonzero allocations.
    pub selective: Vec<(usize, usize)>,
    /// Cases added in the annealing pass; zero when skipped.
    pub annealed: usize,
}

impl TrainingMix {
    pub fn selective_total(&self) -> usize {
        self.selective.iter().map(|(_, k)| k).sum()
    }
}

/// Per-case loss proxy: one minus the mean audit DSC. Unaudited cases score 0.
pub fn case_losses(audits: &[Option<AuditOutcome>]) -> Vec<f64> {
    audits.iter().map(|a| a.as_ref().map_or(0.0, |a| (1.0 - a.mean_dsc()).max(0.0))).collect()
}

/// Splits `total` copies across cases in proportion to `losses` by largest
/// remainder; ties go to the lower index.
pub fn allocate_duplicates(losses: &[f64], total: usize) -> Vec<usize> {
    let mut out = vec![0; losses.len()];
    let sum: f64 = losses.iter().sum();
    if total == 0 || !(sum > 0.0) {
        return out;
    }
    let quotas: Vec<f64> = losses.iter().map(|l| l / sum * total as f64).collect();
    let mut given = 0;
    for (o, q) in out.iter_mut().zip(&quotas) {
        *o = q.floor() as usize;
        given += *o;
    }
    let mut order: Vec<usize> = (0..losses.len()).filter(|&i| losses[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(given)) {
        out[i] += 1;
    }
    out
}

/// Draws the training multiset for one iteration from `corpus` and the mix.
pub fn plan_mix(corpus: &[CaseRecord], audits: &[Option<AuditOutcome>], cfg: &EmConfig, iteration: usize) -> TrainingMix {
    let n = corpus.len();
    let mix = cfg.data_mix;
    let n_labeled = ((mix.labeled * n as f64).round() as usize).min(n);
    let mut labeled: Vec<usize> = (0..n).collect();
    labeled.shuffle(&mut stream_rng(cfg.seed, Stream::Mix, iteration as u64));
    labeled.truncate(n_labeled);
    labeled.sort_unstable();
    let n_selective = (mix.selective * n as f64 - 1e-9).ceil().max(0.0) as usize;
    let selective = allocate_duplicates(&case_losses(audits), n_selective)
        .into_iter()
        .enumerate()
        .filter(|(_, k)| *k > 0)
        .collect();
    TrainingMix { labeled, synthetic: (mix.synthetic * n as f64).round() as usize, selective, annealed: 0 }
}

/// Refits the model on the planned mix, then continues the same sufficient
/// statistics with the gold subset at `annealing_weight`.
pub fn maximization_pass(
    corpus: &[CaseRecord],
    audits: &[Option<AuditOutcome>],
    cfg: &EmConfig,
    spec: &PhantomSpec,
    catalog: &StructureCatalog,
    iteration: usize,
) -> Result<(GaussianIntensityModel, TrainingMix)> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("maximization needs a nonempty corpus"));
    }
    if audits.len() != corpus.len() {
        return Err(Error::Invariant(format!("{} audits for {} cases", audits.len(), corpus.len())));
    }
    let mut mix = plan_mix(corpus, audits, cfg, iteration);
    let mut acc = ModelAccumulator::new(catalog);
    for &i in &mix.labeled {
        acc.add(&corpus[i].volume, &corpus[i].pseudo, 1.0)?;
    }
    for &(i, k) in &mix.selective {
        acc.add(&corpus[i].volume, &corpus[i].pseudo, k as f64)?;
    }
    let synthetic: Vec<CaseRecord> = (0..mix.synthetic)
        .into_par_iter()
        .map(|j| {
            let seed = derive_seed(cfg.seed, Stream::Synthetic, ((iteration as u64) << 32) | j as u64);
            generate_augmented_case(spec, &cfg.augment, seed, &format!("synthetic_{iteration:03}_{j:04}"))
        })
        .collect::<Result<_>>()?;
    for case in &synthetic {
        acc.add(&case.volume, &case.pseudo, 1.0)?;
    }
    if cfg.annealing_enabled {
        let gold: Vec<&CaseRecord> = corpus.iter().filter(|c| c.meta.is_gold).collect();
        if gold.is_empty() {
            log::warn!("annealing enabled but the corpus has no gold cases; skipped");
        }
        for case in &gold {
            acc.add(&case.volume, &case.pseudo, cfg.annealing_weight)?;
        }
        mix.annealed = gold.len();
    }
    Ok((acc.finish()?, mix))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::em::DataMix;
    use crate::phantom::{generate_corpus, NoiseSpec};
    use crate::verifier::{fit_model, AuditAction, StructureAudit};

    fn audit(dsc: f64) -> Option<AuditOutcome> {
        Some(AuditOutcome {
            case_id: String::new(),
            structures: vec![StructureAudit { label: 1, dsc, action: AuditAction::Keep }],
        })
    }

    #[test]
    fn largest_remainder_allocation() {
        assert_eq!(allocate_duplicates(&[0.5, 0.3, 0.2], 4), [2, 1, 1]);
        assert_eq!(allocate_duplicates(&[0.0, 0.4, 0.0], 3), [0, 3, 0]);
        assert_eq!(allocate_duplicates(&[0.1, 0.1], 1), [1, 0]);
        assert_eq!(allocate_duplicates(&[0.0, 0.0], 5), [0, 0]);
        assert_eq!(allocate_duplicates(&[1.0, 2.0], 0), [0, 0]);
    }

    #[test]
    fn losses_ignore_unaudited_cases() {
        assert_eq!(case_losses(&[audit(0.25), None, audit(1.0)]), [0.75, 0.0, 0.0]);
    }

    fn setup(n: usize) -> (RunConfig, Vec<CaseRecord>) {
        let cfg = RunConfig::default_config();
        let corpus = generate_corpus(&cfg.phantom, &cfg.noise, n, 0.25, 4).unwrap().cases;
        (cfg, corpus)
    }

    #[test]
    fn pure_labeled_mix_is_a_plain_fit() {
        let (cfg, corpus) = setup(4);
        let cat = cfg.phantom.catalog().unwrap();
        let mut em = cfg.em.clone();
        em.data_mix = DataMix { labeled: 1.0, synthetic: 0.0, selective: 0.0 };
        em.annealing_enabled = false;
        let audits = vec![audit(0.3); corpus.len()];
        let (model, mix) = maximization_pass(&corpus, &audits, &em, &cfg.phantom, &cat, 1).unwrap();
        assert_eq!(mix.labeled, [0, 1, 2, 3]);
        assert_eq!(mix.selective_total() + mix.synthetic + mix.annealed, 0);
        assert_eq!(model, fit_model(&corpus, None, &cat).unwrap());
    }

    #[test]
    fn synthetic_only_recovers_generator_means() {
        let (cfg, corpus) = setup(4);
        let cat = cfg.phantom.catalog().unwrap();
        let mut em = cfg.em.clone();
        em.data_mix = DataMix { labeled: 0.0, synthetic: 1.0, selective: 0.0 };
        em.annealing_enabled = false;
        em.augment = Default::default();
        let (model, mix) = maximization_pass(&corpus, &vec![None; 4], &em, &cfg.phantom, &cat, 2).unwrap();
        assert_eq!((mix.labeled.len(), mix.synthetic), (0, 4));
        for s in &cfg.phantom.structures {
            let fit = model.structure(s.label).unwrap().fit.unwrap();
            assert!((fit.mean - s.intensity.mean).abs() < 1.0, "{}: {}", s.name, fit.mean);
            assert!((fit.std - s.intensity.std).abs() < 1.0, "{}: {}", s.name, fit.std);
        }
        assert!((model.background.mean - cfg.phantom.background.mean).abs() < 1.0);
    }

    #[test]
    fn worst_case_gets_the_selective_copies() {
        let (cfg, corpus) = setup(8);
        let mut em = cfg.em.clone();
        em.data_mix = DataMix { labeled: 0.7, synthetic: 0.0, selective: 0.3 };
        let mut audits = vec![audit(1.0); 8];
        audits[5] = audit(0.4);
        let mix = plan_mix(&corpus, &audits, &em, 1);
        assert_eq!(mix.selective, [(5, 3)]);
        assert_eq!(mix.labeled.len(), 6);
        assert!(mix.labeled.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn annealing_weights_the_gold_subset() {
        let (cfg, corpus) = setup(4);
        let cat = cfg.phantom.catalog().unwrap();
        let mut em = cfg.em.clone();
        em.data_mix = DataMix { labeled: 1.0, synthetic: 0.0, selective: 0.0 };
        em.annealing_enabled = true;
        let (model, mix) = maximization_pass(&corpus, &vec![None; 4], &em, &cfg.phantom, &cat, 1).unwrap();
        assert_eq!(mix.annealed, 1);
        let weights: Vec<f64> =
            corpus.iter().map(|c| if c.meta.is_gold { 1.0 + em.annealing_weight } else { 1.0 }).collect();
        let direct = fit_model(&corpus, Some(&weights), &cat).unwrap();
        for (a, b) in model.structures.iter().zip(&direct.structures) {
            let (fa, fb) = (a.fit.unwrap(), b.fit.unwrap());
            assert!((fa.mean - fb.mean).abs() < 1e-9 && (fa.std - fb.std).abs() < 1e-9);
        }
    }

    #[test]
    fn annealing_without_gold_is_skipped() {
        let cfg = RunConfig::default_config();
        let cat = cfg.phantom.catalog().unwrap();
        let corpus = generate_corpus(&cfg.phantom, &NoiseSpec::clean(), 2, 0.0, 1).unwrap().cases;
        let mut em = cfg.em.clone();
        em.data_mix = DataMix { labeled: 1.0, synthetic: 0.0, selective: 0.0 };
        let (model, mix) = maximization_pass(&corpus, &[None, None], &em, &cfg.phantom, &cat, 1).unwrap();
        assert_eq!(mix.annealed, 0);
        assert_eq!(model, fit_model(&corpus, None, &cat).unwrap());
    }
}
