use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::detection::tumor_wise_detection_filtered;
use crate::metrics::rates::ConfusionCounts;
use crate::roc::ProbabilityMap;
use crate::scalar::Real;
use crate::volume::{BinaryMask, Connectivity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint<F> {
    pub threshold: F,
    /// Tumor-wise sensitivity over every reference instance in the case set.
    pub sensitivity: F,
    /// Mean count of unmatched predicted components per case.
    pub fp_per_scan: F,
    /// Patient-wise specificity over reference-negative cases; `None` when there are none.
    pub specificity: Option<F>,
}

/// Operating points ordered by strictly decreasing threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve<F> {
    points: Vec<RocPoint<F>>,
}

impl<F: Real> RocCurve<F> {
    pub fn new(points: Vec<RocPoint<F>>) -> Result<Self> {
        for w in points.windows(2) {
            if !(w[1].threshold < w[0].threshold) {
                return Err(Error::Invariant("ROC thresholds must strictly decrease".into()));
            }
            if w[1].sensitivity < w[0].sensitivity {
                return Err(Error::Invariant(
                    "ROC sensitivity must not decrease as the threshold drops".into(),
                ));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[RocPoint<F>] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV with header `threshold,sensitivity,fp_per_scan,specificity`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,sensitivity,fp_per_scan,specificity\n");
        for p in &self.points {
            let spec = p.specificity.map_or_else(|| "nan".to_string(), |s| format!("{s}"));
            out.push_str(&format!("{},{},{},{}\n", p.threshold, p.sensitivity, p.fp_per_scan, spec));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocOptions {
    pub connectivity: Connectivity,
    pub min_fp_voxels: usize,
}

impl Default for RocOptions {
    fn default() -> Self {
        Self { connectivity: Connectivity::Six, min_fp_voxels: 1 }
    }
}

/// `n` evenly spaced thresholds from 1 down to 0.
pub fn threshold_grid<F: Real>(n: usize) -> Vec<F> {
    assert!(n >= 2, "threshold grid needs at least two points");
    let steps = (n - 1) as f64;
    (0..n).map(|k| F::of((steps - k as f64) / steps)).collect()
}

/// Tallies at one threshold: summed instance counts and patient-wise negatives.
pub fn tally_at<T: Real>(
    probs: &[ProbabilityMap<T>],
    refs: &[BinaryMask],
    threshold: T,
    opts: &RocOptions,
) -> Result<(ConfusionCounts, ConfusionCounts)> {
    let mut instances = ConfusionCounts::default();
    let mut patients = ConfusionCounts::default();
    for (p, r) in probs.iter().zip(refs) {
        let pred = p.binarize(threshold);
        let case = tumor_wise_detection_filtered(&pred, r, opts.connectivity, opts.min_fp_voxels)?;
        instances = instances + case;
        if r.is_empty() {
            // Same size filter as the instance tally so both views agree.
            patients = patients
                + if case.fp > 0 { ConfusionCounts::new(0, 0, 1, 0) } else { ConfusionCounts::new(0, 1, 0, 0) };
        }
    }
    Ok((instances, patients))
}

/// Sweeps `thresholds` over every case's probability map.
pub fn build_roc<T: Real>(
    probs: &[ProbabilityMap<T>],
    refs: &[BinaryMask],
    thresholds: &[T],
    opts: &RocOptions,
) -> Result<RocCurve<T>> {
    if probs.is_empty() {
        return Err(Error::EmptyInput("ROC needs at least one case"));
    }
    if probs.len() != refs.len() {
        return Err(Error::shape(format!("{} probability maps for {} references", probs.len(), refs.len())));
    }
    for (p, r) in probs.iter().zip(refs) {
        if p.dims() != r.dims() {
            return Err(Error::shape("probability map and reference mask differ in dims"));
        }
    }
    if thresholds.iter().any(|t| !(*t >= T::zero() && *t <= T::one())) {
        return Err(Error::Spec("thresholds must lie in [0, 1]".into()));
    }
    if thresholds.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Spec("thresholds must be strictly decreasing".into()));
    }

    let n = T::of(probs.len() as f64);
    let mut points = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let (inst, pat) = tally_at(probs, refs, t, opts)?;
        let sensitivity = inst.sensitivity().map_err(|_| {
            Error::EmptyInput("ROC needs at least one reference tumor instance")
        })?;
        points.push(RocPoint {
            threshold: t,
            sensitivity,
            fp_per_scan: T::of(inst.fp as f64) / n,
            specificity: pat.specificity().ok(),
        });
    }
    RocCurve::new(points)
}
