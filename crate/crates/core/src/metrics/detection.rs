use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::rates::ConfusionCounts;
use crate::volume::{connected_components, BinaryMask, Connectivity};

/// Case-level detection outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectionOutcome {
    TP,
    TN,
    FP,
    FN,
}

impl DetectionOutcome {
    pub fn counts(self) -> ConfusionCounts {
        match self {
            DetectionOutcome::TP => ConfusionCounts::new(1, 0, 0, 0),
            DetectionOutcome::TN => ConfusionCounts::new(0, 1, 0, 0),
            DetectionOutcome::FP => ConfusionCounts::new(0, 0, 1, 0),
            DetectionOutcome::FN => ConfusionCounts::new(0, 0, 0, 1),
        }
    }
}

/// A case is positive when it has at least one tumor voxel; location is ignored.
pub fn patient_wise_detection(pred: &BinaryMask, reference: &BinaryMask) -> Result<DetectionOutcome> {
    pred.ensure_same_dims(reference)?;
    Ok(match (!pred.is_empty(), !reference.is_empty()) {
        (true, true) => DetectionOutcome::TP,
        (false, false) => DetectionOutcome::TN,
        (true, false) => DetectionOutcome::FP,
        (false, true) => DetectionOutcome::FN,
    })
}

/// Instance-level tallies with no minimum size for false-positive components.
pub fn tumor_wise_detection(
    pred: &BinaryMask,
    reference: &BinaryMask,
    connectivity: Connectivity,
) -> Result<ConfusionCounts> {
    tumor_wise_detection_filtered(pred, reference, connectivity, 1)
}

/// Instance-level tallies.
///
/// Each reference component is a TP when any predicted voxel touches it, else
/// an FN. Predicted components that touch no reference voxel and hold at least
/// `min_fp_voxels` voxels are FPs. TN is always 0 at instance level.
pub fn tumor_wise_detection_filtered(
    pred: &BinaryMask,
    reference: &BinaryMask,
    connectivity: Connectivity,
    min_fp_voxels: usize,
) -> Result<ConfusionCounts> {
    pred.ensure_same_dims(reference)?;
    let refs = connected_components(reference, connectivity);
    let preds = connected_components(pred, connectivity);

    let mut ref_hit = vec![false; refs.count()];
    let mut pred_hit = vec![false; preds.count()];
    for (i, (&r, &p)) in refs.ids().iter().zip(preds.ids()).enumerate() {
        if r != 0 && p != 0 {
            debug_assert!(pred.at(i) && reference.at(i));
            ref_hit[r as usize - 1] = true;
            pred_hit[p as usize - 1] = true;
        }
    }
    let tp = ref_hit.iter().filter(|h| **h).count() as u64;
    let fn_ = ref_hit.len() as u64 - tp;
    let fp = pred_hit
        .iter()
        .zip(preds.sizes())
        .filter(|(hit, &size)| !**hit && size >= min_fp_voxels)
        .count() as u64;
    Ok(ConfusionCounts::new(tp, 0, fp, fn_))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;

    fn line(bits: &str) -> BinaryMask {
        BinaryMask::new(Dims::new(bits.len(), 1, 1), bits.chars().map(|c| c == '1').collect()).unwrap()
    }

    #[test]
    fn patient_wise_table() {
        assert_eq!(patient_wise_detection(&line("000"), &line("000")).unwrap(), DetectionOutcome::TN);
        assert_eq!(patient_wise_detection(&line("000"), &line("010")).unwrap(), DetectionOutcome::FN);
        assert_eq!(patient_wise_detection(&line("100"), &line("000")).unwrap(), DetectionOutcome::FP);
        // Disjoint but both nonempty: still a patient-wise hit.
        assert_eq!(patient_wise_detection(&line("100"), &line("001")).unwrap(), DetectionOutcome::TP);
    }

    #[test]
    fn one_of_two_found() {
        let c = tumor_wise_detection(&line("1100000"), &line("1000011"), Connectivity::Six).unwrap();
        assert_eq!((c.tp, c.fn_, c.fp), (1, 1, 0));
    }

    #[test]
    fn three_misses() {
        let c = tumor_wise_detection(&line("1010100000"), &line("0000000100"), Connectivity::Six)
            .unwrap();
        assert_eq!((c.tp, c.fn_, c.fp), (0, 1, 3));
        assert_eq!(c.tn, 0);
    }

    #[test]
    fn minimum_fp_size() {
        let c = tumor_wise_detection_filtered(&line("1011100"), &line("0000000"), Connectivity::Six, 2)
            .unwrap();
        assert_eq!(c.fp, 1);
    }
}
