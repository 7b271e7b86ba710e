use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::TumorType;

/// `matrix[reference][predicted]` over PDAC, cyst, PNET (in that order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisConfusion {
    pub classes: [TumorType; 3],
    pub matrix: [[u64; 3]; 3],
    pub accuracy: f64,
}

pub fn diagnosis_confusion(pred: &[TumorType], reference: &[TumorType]) -> Result<DiagnosisConfusion> {
    if pred.len() != reference.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} references",
            pred.len(),
            reference.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("diagnosis confusion needs at least one case"));
    }
    let mut matrix = [[0u64; 3]; 3];
    for (p, r) in pred.iter().zip(reference) {
        matrix[r.index()][p.index()] += 1;
    }
    let trace: u64 = (0..3).map(|k| matrix[k][k]).sum();
    Ok(DiagnosisConfusion {
        classes: TumorType::ALL,
        matrix,
        accuracy: trace as f64 / pred.len() as f64,
    })
}
