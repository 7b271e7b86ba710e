use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{tumor_wise_detection, RocCurve};
use crate::roc::ProbabilityMap;
use crate::scalar::Real;
use crate::volume::{connected_components, BinaryMask, CaseRecord, Connectivity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy<F> {
    pub target_sensitivity: F,
    pub selected_threshold: F,
    pub achieved_sensitivity: F,
    pub fp_per_scan: F,
    /// False when no point reaches the target; the most sensitive point is used.
    pub feasible: bool,
}

/// Largest threshold whose sensitivity reaches `target`.
pub fn select_threshold<F: Real>(curve: &RocCurve<F>, target: F) -> Result<ThresholdPolicy<F>> {
    let points = curve.points();
    let last = points.last().ok_or(Error::EmptyInput("cannot select a threshold on an empty curve"))?;
    if !(target > F::zero() && target <= F::one()) {
        return Err(Error::Spec(format!("target sensitivity {target} outside (0, 1]")));
    }
    // Thresholds strictly decrease along the curve, so the first hit is the largest.
    let (p, feasible) = match points.iter().find(|p| p.sensitivity >= target) {
        Some(p) => (p, true),
        None => (last, false),
    };
    Ok(ThresholdPolicy {
        target_sensitivity: target,
        selected_threshold: p.threshold,
        achieved_sensitivity: p.sensitivity,
        fp_per_scan: p.fp_per_scan,
        feasible,
    })
}

/// Empties the prediction of a case whose report states no tumor.
pub fn suppress_fp_by_report(case: &CaseRecord, tumor_pred: &BinaryMask) -> BinaryMask {
    if case.report.tumor_present() {
        tumor_pred.clone()
    } else {
        BinaryMask::empty(tumor_pred.dims())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub seconds_per_fp_removal: f64,
    pub seconds_per_scratch_annotation: f64,
    /// Whether report-based removals are free.
    pub report_autoremoval: bool,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { seconds_per_fp_removal: 5.0, seconds_per_scratch_annotation: 270.0, report_autoremoval: true }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.seconds_per_fp_removal > 0.0) || !(self.seconds_per_scratch_annotation > 0.0) {
            return Err(Error::Config("cost model durations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Erasure {
    pub cleaned: BinaryMask,
    pub clicks: u64,
    pub seconds: f64,
}

/// Erases every predicted component that touches no gold voxel, one click each.
pub fn simulate_fp_erasure(
    tumor_pred: &BinaryMask,
    oracle_gold: &BinaryMask,
    cost: &CostModel,
    connectivity: Connectivity,
) -> Result<Erasure> {
    tumor_pred.ensure_same_dims(oracle_gold)?;
    let comps = connected_components(tumor_pred, connectivity);
    let mut hit = vec![false; comps.count()];
    for i in oracle_gold.indices() {
        let id = comps.ids()[i];
        if id != 0 {
            hit[id as usize - 1] = true;
        }
    }
    let clicks = hit.iter().filter(|h| !**h).count() as u64;
    let cleaned = comps.filter_mask(|id, _| hit[id as usize - 1]);
    Ok(Erasure { cleaned, clicks, seconds: clicks as f64 * cost.seconds_per_fp_removal })
}

/// Per-case bookkeeping of the assisted tumor-annotation workflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseCost {
    pub case_id: String,
    pub gold_instances: u64,
    pub missed_instances: u64,
    /// False components erased by hand.
    pub clicks: u64,
    /// Components dropped because the report is negative.
    pub report_removed: u64,
}

/// Runs suppression and erasure on one case at `threshold`.
pub fn process_case<T: Real>(
    case: &CaseRecord,
    prob: &ProbabilityMap<T>,
    threshold: T,
    gold: &BinaryMask,
    cost: &CostModel,
    connectivity: Connectivity,
) -> Result<CaseCost> {
    let pred = prob.binarize(threshold);
    let suppressed = suppress_fp_by_report(case, &pred);
    let report_removed = if case.report.tumor_present() {
        0
    } else {
        connected_components(&pred, connectivity).count() as u64
    };
    let erased = simulate_fp_erasure(&suppressed, gold, cost, connectivity)?;
    let det = tumor_wise_detection(&erased.cleaned, gold, connectivity)?;
    Ok(CaseCost {
        case_id: case.case_id.clone(),
        gold_instances: det.tp + det.fn_,
        missed_instances: det.fn_,
        clicks: erased.clicks,
        report_removed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SavingsReport {
    pub gold_instances: u64,
    pub missed_instances: u64,
    pub clicks: u64,
    pub report_removed: u64,
    pub scratch_seconds: f64,
    pub workflow_seconds: f64,
    /// `1 - workflow / scratch`.
    pub ratio: f64,
}

/// Compares assisted annotation time with annotating every instance from scratch.
pub fn annotation_savings(results: &[CaseCost], cost: &CostModel) -> Result<SavingsReport> {
    cost.validate()?;
    let sum = |f: fn(&CaseCost) -> u64| results.iter().map(f).sum::<u64>();
    let gold_instances = sum(|c| c.gold_instances);
    let missed_instances = sum(|c| c.missed_instances);
    let clicks = sum(|c| c.clicks);
    let report_removed = sum(|c| c.report_removed);
    if gold_instances == 0 {
        return Err(Error::UndefinedRate { rate: "savings ratio" });
    }
    let paid = clicks + if cost.report_autoremoval { 0 } else { report_removed };
    let scratch_seconds = gold_instances as f64 * cost.seconds_per_scratch_annotation;
    let workflow_seconds = paid as f64 * cost.seconds_per_fp_removal
        + missed_instances as f64 * cost.seconds_per_scratch_annotation;
    Ok(SavingsReport {
        gold_instances,
        missed_instances,
        clicks,
        report_removed,
        scratch_seconds,
        workflow_seconds,
        ratio: 1.0 - workflow_seconds / scratch_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::RocPoint;
    use crate::volume::Dims;

    fn curve(pts: &[(f64, f64, f64)]) -> RocCurve<f64> {
        RocCurve::new(
            pts.iter()
                .map(|&(t, s, f)| RocPoint { threshold: t, sensitivity: s, fp_per_scan: f, specificity: None })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn picks_largest_feasible_threshold() {
        let c = curve(&[(0.8, 0.5, 0.0), (0.5, 0.9, 0.2), (0.2, 1.0, 0.7), (0.1, 1.0, 1.5)]);
        let p = select_threshold(&c, 0.99).unwrap();
        assert!(p.feasible);
        assert_eq!((p.selected_threshold, p.fp_per_scan), (0.2, 0.7));
    }

    #[test]
    fn infeasible_returns_lowest_threshold() {
        let c = curve(&[(0.8, 0.5, 0.0), (0.3, 0.9, 0.2)]);
        let p = select_threshold(&c, 0.99).unwrap();
        assert!(!p.feasible);
        assert_eq!(p.selected_threshold, 0.3);
        assert!(select_threshold(&curve(&[]), 0.9).is_err());
    }

    fn line(bits: &str) -> BinaryMask {
        BinaryMask::new(Dims::new(bits.len(), 1, 1), bits.chars().map(|c| c == '1').collect()).unwrap()
    }

    #[test]
    fn erasure_counts_clicks() {
        let cost = CostModel::default();
        let e = simulate_fp_erasure(&line("0110001"), &line("0110000"), &cost, Connectivity::Six).unwrap();
        assert_eq!((e.clicks, e.seconds), (1, 5.0));
        assert_eq!(e.cleaned, line("0110000"));
        let e = simulate_fp_erasure(&line("1010100"), &line("0010000"), &cost, Connectivity::Six).unwrap();
        assert_eq!((e.clicks, e.seconds), (2, 10.0));
        let e = simulate_fp_erasure(&line("0110000"), &line("0100000"), &cost, Connectivity::Six).unwrap();
        assert_eq!(e.clicks, 0);
        assert_eq!(e.cleaned, line("0110000"));
    }

    fn cc(gold: u64, missed: u64, clicks: u64) -> CaseCost {
        CaseCost { case_id: String::new(), gold_instances: gold, missed_instances: missed, clicks, report_removed: 0 }
    }

    #[test]
    fn savings_extremes_and_plug_in() {
        let cost = CostModel::default();
        assert_eq!(annotation_savings(&[cc(3, 0, 0)], &cost).unwrap().ratio, 1.0);
        assert_eq!(annotation_savings(&[cc(3, 3, 0)], &cost).unwrap().ratio, 0.0);
        assert!(matches!(annotation_savings(&[cc(0, 0, 4)], &cost), Err(Error::UndefinedRate { .. })));
        // 100 scans, one tumor each, 99 found, 60 false components.
        let r = annotation_savings(&[cc(100, 1, 60)], &cost).unwrap();
        let closed = 1.0 - (0.6 * 5.0 + 0.01 * 270.0) / 270.0;
        assert!((r.ratio - closed).abs() < 1e-12);
        assert!((r.ratio - 0.978_888_888_9).abs() < 1e-9);
    }
}
