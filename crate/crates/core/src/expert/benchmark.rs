use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::judge::{Judge, PairRequest, Preference};
use super::prior::PriorTable;
use crate::error::{Error, Result};
use crate::phantom::rng::{derive_seed, stream_rng, Stream};
use crate::phantom::{generate_case, sample_op, NoiseOp, NoiseSpec, OpKind, PhantomSpec};
use crate::volume::{project_overlay, StructureKind};

/// Pairs judged per generated case.
const PAIRS_PER_CASE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPair {
    pub case_index: usize,
    pub structure: String,
    pub op: NoiseOp,
    /// Whether the gold-derived overlay was shown first.
    pub gold_first: bool,
    pub preference: Preference,
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub ties: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub accuracy: f64,
    pub overall: Tally,
    pub per_structure: BTreeMap<String, Tally>,
    pub per_op: BTreeMap<String, Tally>,
    pub pairs: Vec<BenchmarkPair>,
}

/// Measures how often `judge` prefers the clean annotation over a corrupted copy.
///
/// Each pair takes one structure of a clean phantom (tumor pairs only on
/// tumor-bearing cases) and corrupts it with one operation drawn in
/// proportion to the configured noise rates. Corruptions that leave the
/// front view unchanged are redrawn, since no projection-based judge can see
/// them. Display order is randomized; a tie counts as a miss.
pub fn judge_benchmark(
    spec: &PhantomSpec,
    noise: &NoiseSpec,
    priors: &PriorTable,
    judge: &dyn Judge,
    n_pairs: usize,
    seed: u64,
) -> Result<BenchmarkReport> {
    let catalog = spec.catalog()?;
    let sp = spec.spacing().0;
    let mut pairs = Vec::with_capacity(n_pairs);
    for case_index in 0..n_pairs.div_ceil(PAIRS_PER_CASE) {
        let case = generate_case(spec, derive_seed(seed, Stream::Benchmark, case_index as u64))?;
        let gold = case.gold.as_ref().expect("generated cases carry gold");
        let present: Vec<_> = catalog.entries().iter().filter(|e| gold.voxel_count(e.label) > 0).collect();
        let mut rng = stream_rng(seed, Stream::Benchmark, (1 << 32) + case_index as u64);
        let in_case = PAIRS_PER_CASE.min(n_pairs - case_index * PAIRS_PER_CASE);
        for _ in 0..in_case {
            let entry = present[rng.random_range(0..present.len())];
            let kinds: Vec<(OpKind, f64)> = if entry.kind == StructureKind::Tumor {
                vec![(OpKind::TumorMiss, noise.tumor_miss), (OpKind::TumorFp, noise.tumor_fp_rate)]
            } else {
                let r = noise.rates_for(&entry.name);
                vec![
                    (OpKind::Delete, r.delete),
                    (OpKind::Shift, r.shift),
                    (OpKind::Fragment, r.fragment),
                    (OpKind::Spurious, r.spurious),
                    (OpKind::BoundaryJitter, r.boundary_jitter),
                ]
            };
            let total: f64 = kinds.iter().map(|k| k.1).sum();
            if !(total > 0.0) {
                return Err(Error::Spec(format!("no corruption has positive rate for `{}`", entry.name)));
            }
            let clean = project_overlay(&gold.mask_of(entry.label), sp);
            let mut drawn = None;
            for _ in 0..100 {
                let mut u = rng.random_range(0.0..total);
                let kind = kinds.iter().find(|(_, w)| {
                    u -= w;
                    u < 0.0
                });
                let kind = kind.unwrap_or(kinds.last().expect("nonempty")).0;
                let Some(op) = sample_op(kind, gold, entry.label, spec, noise, &mut rng) else {
                    continue;
                };
                let mut map = gold.clone();
                op.apply(&mut map);
                let corrupted = project_overlay(&map.mask_of(entry.label), sp);
                if corrupted != clean {
                    drawn = Some((op, corrupted));
                    break;
                }
            }
            let (op, corrupted) = drawn
                .ok_or_else(|| Error::Invariant(format!("could not corrupt `{}` visibly", entry.name)))?;
            let gold_first = rng.random_bool(0.5);
            let (a, b) = if gold_first { (&clean, &corrupted) } else { (&corrupted, &clean) };
            let prior = priors
                .get(entry.label)
                .ok_or_else(|| Error::Config(format!("no prior for `{}`", entry.name)))?;
            let verdict = judge.judge(&PairRequest { case_id: &case.case_id, prior, overlay_a: a, overlay_b: b })?;
            let correct = verdict.preference == if gold_first { Preference::First } else { Preference::Second };
            pairs.push(BenchmarkPair {
                case_index,
                structure: entry.name.clone(),
                op,
                gold_first,
                preference: verdict.preference,
                correct,
            });
        }
    }
    let mut overall = Tally::default();
    let mut per_structure: BTreeMap<String, Tally> = BTreeMap::new();
    let mut per_op: BTreeMap<String, Tally> = BTreeMap::new();
    for p in &pairs {
        for t in [
            &mut overall,
            per_structure.entry(p.structure.clone()).or_default(),
            per_op.entry(p.op.name().to_string()).or_default(),
        ] {
            t.total += 1;
            t.correct += p.correct as usize;
            t.ties += (p.preference == Preference::Tie) as usize;
        }
    }
    let accuracy = if overall.total == 0 { 0.0 } else { overall.correct as f64 / overall.total as f64 };
    Ok(BenchmarkReport { accuracy, overall, per_structure, per_op, pairs })
}
