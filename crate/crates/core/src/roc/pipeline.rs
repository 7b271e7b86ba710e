use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RocConfig;
use crate::error::{Error, Result};
use crate::metrics::{build_roc, threshold_grid, RocCurve, RocOptions};
use crate::roc::{annotation_savings, process_case, select_threshold, CaseCost, CostModel, ProbabilityMap, SavingsReport, ThresholdPolicy};
use crate::verifier::SegmentationModel;
use crate::volume::{extract_structure_mask, BinaryMask, CaseRecord, StructureCatalog};

/// Everything produced by one threshold-selection and annotation-cost pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TumorWorkflow {
    pub schema_version: u32,
    pub validation_cases: Vec<String>,
    pub target_cases: Vec<String>,
    pub curve: RocCurve<f64>,
    pub policy: ThresholdPolicy<f64>,
    pub costs: Vec<CaseCost>,
    pub savings: SavingsReport,
    /// Report-negative target cases still carrying a prediction after suppression.
    pub negative_cases_with_fp: usize,
}

/// Tumor probability map of a case, widened to `f64`.
pub fn tumor_probability(
    model: &dyn SegmentationModel,
    case: &CaseRecord,
    catalog: &StructureCatalog,
) -> Result<ProbabilityMap<f64>> {
    let tumor = catalog.require_tumor()?;
    let p = model.predict_prob(&case.volume, tumor)?;
    ProbabilityMap::new(p.dims(), p.spacing(), p.probs().iter().map(|&v| v as f64).collect())
}

/// Union of every tumor label in the case's gold annotation.
pub fn gold_tumor_mask(case: &CaseRecord, catalog: &StructureCatalog) -> Result<BinaryMask> {
    let gold = case
        .gold
        .as_ref()
        .ok_or_else(|| Error::Invariant(format!("case {} has no gold labels for the tumor workflow", case.case_id)))?;
    let mut mask = BinaryMask::empty(case.volume.dims());
    for label in catalog.tumor_labels() {
        mask.union_with(&extract_structure_mask(gold, catalog, label)?)?;
    }
    Ok(mask)
}

/// Fits the operating point on `validation` and replays the assisted workflow on `target`.
pub fn tumor_workflow(
    validation: &[&CaseRecord],
    target: &[&CaseRecord],
    model: &dyn SegmentationModel,
    catalog: &StructureCatalog,
    roc: &RocConfig,
    cost: &CostModel,
) -> Result<TumorWorkflow> {
    if target.is_empty() {
        return Err(Error::EmptyInput("tumor workflow needs at least one target case"));
    }
    let opts = RocOptions { min_fp_voxels: roc.min_fp_voxels, ..RocOptions::default() };
    let val: Vec<(ProbabilityMap<f64>, BinaryMask)> = validation
        .par_iter()
        .map(|c| Ok((tumor_probability(model, c, catalog)?, gold_tumor_mask(c, catalog)?)))
        .collect::<Result<_>>()?;
    let (probs, refs): (Vec<_>, Vec<_>) = val.into_iter().unzip();
    let curve = build_roc(&probs, &refs, &threshold_grid::<f64>(roc.thresholds), &opts)?;
    drop(probs);
    let policy = select_threshold(&curve, roc.target_sensitivity)?;
    if !policy.feasible {
        log::warn!(
            "no threshold reaches sensitivity {}; using {}",
            roc.target_sensitivity,
            policy.selected_threshold
        );
    }

    let per_case: Vec<(CaseCost, bool)> = target
        .par_iter()
        .map(|c| {
            let prob = tumor_probability(model, c, catalog)?;
            let gold = gold_tumor_mask(c, catalog)?;
            let cc = process_case(c, &prob, policy.selected_threshold, &gold, cost, opts.connectivity)?;
            // After suppression a negative case has nothing left to erase.
            let leftover = !c.report.tumor_present() && cc.clicks > 0;
            Ok((cc, leftover))
        })
        .collect::<Result<_>>()?;
    let negative_cases_with_fp = per_case.iter().filter(|(_, l)| *l).count();
    let costs: Vec<CaseCost> = per_case.into_iter().map(|(c, _)| c).collect();
    let savings = annotation_savings(&costs, cost)?;
    Ok(TumorWorkflow {
        schema_version: crate::volume::io::SCHEMA_VERSION,
        validation_cases: validation.iter().map(|c| c.case_id.clone()).collect(),
        target_cases: target.iter().map(|c| c.case_id.clone()).collect(),
        curve,
        policy,
        costs,
        savings,
        negative_cases_with_fp,
    })
}

/// Splits a corpus into gold-flagged validation cases and the remainder.
pub fn split_by_gold(corpus: &[CaseRecord]) -> (Vec<&CaseRecord>, Vec<&CaseRecord>) {
    corpus.iter().partition(|c| c.meta.is_gold)
}
