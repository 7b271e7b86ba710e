use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::EmConfig;
use super::oracle::{
    candidate_overlays, EscalationEntry, EscalationQueue, EscalationReason, HumanOracle, ReviewDecision, ReviewItem,
};
use crate::error::{Error, Result};
use crate::expert::{run_tournament, shape_cleanup, Judge, PriorTable, TournamentResult};
use crate::metrics::dsc;
use crate::verifier::{
    apply_update_with, audit_against, predict_for_case, replace_structure, AuditAction, AuditOutcome, ChangeLog,
    SegmentationModel,
};
use crate::volume::{CaseRecord, Label, LabelMap, StructureCatalog};

/// Decision counts of one pass. `keep + auto_replace + route + escalate`
/// equals `audited`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCounts {
    pub keep: usize,
    pub auto_replace: usize,
    /// Routed to the expert and settled without a human.
    pub route: usize,
    /// Routed and handed to the human oracle.
    pub escalate: usize,
}

impl ActionCounts {
    pub fn total(&self) -> usize {
        self.keep + self.auto_replace + self.route + self.escalate
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpectationStats {
    pub audited: usize,
    pub counts: ActionCounts,
    /// Routed structures the tournament settled by a strict vote.
    pub tournament_decided: usize,
    /// Tournament ties auto-resolved because the candidates largely agree.
    pub agreement_ties: usize,
    /// Ties that wanted a human but exceeded the budget; left for re-audit.
    pub deferred: usize,
    /// Ties that wanted a human, before the budget cap.
    pub escalation_demand: usize,
    pub escalation_budget: usize,
    pub escalation_fraction: f64,
    /// Escalations the oracle could not settle; re-audited next iteration.
    pub unresolved: usize,
    pub protocol_failures: usize,
    /// Structure annotations whose voxels changed.
    pub changed: usize,
}

pub struct ExpectationOutput {
    pub corpus: Vec<CaseRecord>,
    pub queue: EscalationQueue,
    pub changes: ChangeLog,
    pub stats: ExpectationStats,
    /// Audit of each case in corpus order; `None` for skipped gold cases.
    pub audits: Vec<Option<AuditOutcome>>,
}

pub struct ExpertContext<'a> {
    pub judge: &'a dyn Judge,
    pub priors: &'a PriorTable,
    pub oracle: &'a dyn HumanOracle,
}

struct Pending {
    case_index: usize,
    label: Label,
    audit_dsc: f64,
    reason: EscalationReason,
    candidates: Vec<LabelMap>,
}

struct CaseWork {
    case: CaseRecord,
    audit: Option<AuditOutcome>,
    changes: ChangeLog,
    decided: usize,
    agreement_ties: usize,
    protocol_failures: usize,
    pending: Vec<Pending>,
}

fn candidate_agreement(candidates: &[LabelMap], label: Label) -> Result<f64> {
    dsc(&candidates[0].mask_of(label), &candidates[1].mask_of(label))
}

fn process_case(
    index: usize,
    case: &CaseRecord,
    model: &dyn SegmentationModel,
    catalog: &StructureCatalog,
    cfg: &EmConfig,
    ctx: &ExpertContext<'_>,
) -> Result<CaseWork> {
    if case.meta.is_gold {
        return Ok(CaseWork {
            case: case.clone(),
            audit: None,
            changes: ChangeLog::default(),
            decided: 0,
            agreement_ties: 0,
            protocol_failures: 0,
            pending: Vec::new(),
        });
    }
    let pred = predict_for_case(model, case, catalog)?;
    let outcome = audit_against(case, &pred, catalog, &cfg.thresholds())?;
    let (mut updated, mut changes) = apply_update_with(case, &outcome, &pred, catalog)?;

    let mut work = CaseWork {
        case: case.clone(),
        audit: Some(outcome.clone()),
        changes: ChangeLog::default(),
        decided: 0,
        agreement_ties: 0,
        protocol_failures: 0,
        pending: Vec::new(),
    };
    let routed: Vec<&crate::verifier::StructureAudit> = outcome.with_action(AuditAction::RouteToExpert).collect();
    if !routed.is_empty() {
        let candidates = vec![shape_cleanup(&updated.pseudo, catalog), pred];
        for s in routed {
            let result: TournamentResult = run_tournament(
                &case.case_id,
                &case.volume,
                &candidates,
                &[s.label],
                ctx.judge,
                ctx.priors,
            )?;
            work.protocol_failures += result.protocol_failure() as usize;
            let round = result.last();
            if round.score_1 != round.score_2 {
                work.decided += 1;
                let action = if result.winner == 0 { "expert_keep" } else { "expert_replace" };
                let rec = replace_structure(&mut updated.pseudo, &candidates[result.winner], s.label, catalog, &case.case_id, action)?;
                changes.records.push(rec);
            } else if candidate_agreement(&candidates, s.label)? >= cfg.tie_agreement_dsc {
                work.agreement_ties += 1;
            } else {
                let reason = if result.protocol_failure() {
                    EscalationReason::ProtocolFailure
                } else {
                    EscalationReason::ExpertTie
                };
                work.pending.push(Pending {
                    case_index: index,
                    label: s.label,
                    audit_dsc: s.dsc,
                    reason,
                    candidates: candidates.clone(),
                });
            }
        }
    }
    work.case = updated;
    work.changes = changes;
    Ok(work)
}

/// Audits every non-gold case, applies replacements, settles routed
/// structures by tournament and escalates the remaining ties within budget.
pub fn expectation_pass(
    corpus: &[CaseRecord],
    model: &dyn SegmentationModel,
    catalog: &StructureCatalog,
    cfg: &EmConfig,
    ctx: &ExpertContext<'_>,
    iteration: usize,
) -> Result<ExpectationOutput> {
    let work: Vec<CaseWork> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, c)| process_case(i, c, model, catalog, cfg, ctx))
        .collect::<Result<_>>()?;

    let mut stats = ExpectationStats::default();
    let mut cases = Vec::with_capacity(work.len());
    let mut audits = Vec::with_capacity(work.len());
    let mut changes = ChangeLog::default();
    let mut pending = Vec::new();
    for w in work {
        if let Some(a) = &w.audit {
            stats.audited += a.structures.len();
            stats.counts.keep += a.with_action(AuditAction::Keep).count();
            stats.counts.auto_replace += a.with_action(AuditAction::AutoReplace).count();
        }
        stats.tournament_decided += w.decided;
        stats.agreement_ties += w.agreement_ties;
        stats.protocol_failures += w.protocol_failures;
        changes.extend(w.changes);
        pending.extend(w.pending);
        cases.push(w.case);
        audits.push(w.audit);
    }

    // Least consistent annotations get the human budget first.
    pending.sort_by(|a, b| a.audit_dsc.total_cmp(&b.audit_dsc).then(a.case_index.cmp(&b.case_index)).then(a.label.cmp(&b.label)));
    stats.escalation_demand = pending.len();
    stats.escalation_budget = (cfg.escalation_budget_fraction * stats.audited as f64).floor() as usize;
    let take = pending.len().min(stats.escalation_budget);
    stats.deferred = pending.len() - take;
    let mut escalated: Vec<Pending> = pending.into_iter().take(take).collect();
    escalated.sort_by_key(|p| (p.case_index, p.label));

    let mut queue = EscalationQueue::default();
    for p in escalated {
        let case = &mut cases[p.case_index];
        let entry = EscalationEntry {
            iteration,
            case_id: case.case_id.clone(),
            structure: catalog.name(p.label).to_string(),
            label: p.label,
            reason: p.reason,
            audit_dsc: p.audit_dsc,
            candidates: candidate_overlays(&p.candidates, p.label),
        };
        let choice = match ctx.oracle.review(&ReviewItem { case, entry: &entry, candidates: &p.candidates }) {
            Ok(c) => c,
            Err(Error::Oracle(msg)) => {
                log::warn!("oracle failed on {}: {msg}; entry stays open", entry.key());
                None
            }
            Err(e) => return Err(e),
        };
        match choice {
            Some(k) if k < p.candidates.len() => {
                let action = if k == 0 { "human_keep" } else { "human_replace" };
                let rec = replace_structure(&mut case.pseudo, &p.candidates[k], p.label, catalog, &case.case_id, action)?;
                changes.records.push(rec);
            }
            Some(k) => return Err(Error::Oracle(format!("oracle chose candidate {k} of {}", p.candidates.len()))),
            None => stats.unresolved += 1,
        }
        queue.resolved.insert(entry.key(), ReviewDecision { choice });
        queue.entries.push(entry);
    }

    stats.counts.escalate = queue.entries.len();
    let routed = stats.audited - stats.counts.keep - stats.counts.auto_replace;
    stats.counts.route = routed - stats.counts.escalate;
    stats.escalation_fraction =
        if stats.audited == 0 { 0.0 } else { stats.counts.escalate as f64 / stats.audited as f64 };
    stats.changed = count_changed(corpus, &cases, catalog);
    Ok(ExpectationOutput { corpus: cases, queue, changes, stats, audits })
}

/// Structure annotations whose voxel sets differ between two corpora.
pub fn count_changed(before: &[CaseRecord], after: &[CaseRecord], catalog: &StructureCatalog) -> usize {
    before
        .iter()
        .zip(after)
        .map(|(a, b)| {
            if a.pseudo == b.pseudo {
                return 0;
            }
            catalog
                .labels()
                .filter(|&l| {
                    a.pseudo.labels().iter().zip(b.pseudo.labels()).any(|(&x, &y)| (x == l) != (y == l))
                })
                .count()
        })
        .sum()
}
