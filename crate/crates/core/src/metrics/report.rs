use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::overlap::dsc;
use crate::metrics::surface::{nsd, SurfaceDistanceSpec};
use crate::volume::io::SCHEMA_VERSION;
use crate::volume::{CaseRecord, Label, LabelMap, StructureCatalog};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureMetrics {
    pub dsc: f64,
    /// `None` when surface distances were not requested.
    pub nsd: Option<f64>,
    pub pred_voxels: usize,
    pub ref_voxels: usize,
}

/// Per-structure agreement between a prediction and a reference label map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_structure: BTreeMap<Label, StructureMetrics>,
}

impl MetricReport {
    pub fn mean_dsc(&self) -> f64 {
        if self.per_structure.is_empty() {
            return 1.0;
        }
        self.per_structure.values().map(|m| m.dsc).sum::<f64>() / self.per_structure.len() as f64
    }
}

pub fn evaluate_maps(
    pred: &LabelMap,
    reference: &LabelMap,
    catalog: &StructureCatalog,
    surface_tolerance_mm: Option<f64>,
) -> Result<MetricReport> {
    pred.ensure_same_grid(reference)?;
    let spec = surface_tolerance_mm
        .map(|t| SurfaceDistanceSpec::new(t, reference.spacing()))
        .transpose()?;
    let mut per_structure = BTreeMap::new();
    for label in catalog.labels() {
        let (p, r) = (pred.mask_of(label), reference.mask_of(label));
        per_structure.insert(
            label,
            StructureMetrics {
                dsc: dsc(&p, &r)?,
                nsd: spec.as_ref().map(|s| nsd(&p, &r, s)).transpose()?,
                pred_voxels: p.count(),
                ref_voxels: r.count(),
            },
        );
    }
    Ok(MetricReport { per_structure })
}

/// Median and interquartile range, linear interpolation between order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub n: usize,
}

pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: quantile(&v, 0.5),
            q1: quantile(&v, 0.25),
            q3: quantile(&v, 0.75),
            n: v.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureRecord {
    pub label: Label,
    pub name: String,
    #[serde(flatten)]
    pub metrics: StructureMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEvaluation {
    pub case_id: String,
    pub structures: Vec<StructureRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureAggregate {
    pub label: Label,
    pub name: String,
    pub dsc: Summary,
    pub nsd: Option<Summary>,
}

/// Pseudo-vs-gold evaluation of a whole corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEvaluation {
    pub schema_version: u32,
    pub cases: Vec<CaseEvaluation>,
    pub aggregates: Vec<StructureAggregate>,
    /// Mean DSC over every (case, structure) pair.
    pub mean_dsc: f64,
}

/// Scores every case's pseudo labels against its gold labels.
///
/// Cases are evaluated in parallel and merged in input order.
pub fn evaluate_corpus(
    cases: &[CaseRecord],
    catalog: &StructureCatalog,
    surface_tolerance_mm: Option<f64>,
) -> Result<CorpusEvaluation> {
    let reports: Vec<(String, MetricReport)> = cases
        .par_iter()
        .map(|c| {
            let gold = c
                .gold
                .as_ref()
                .ok_or_else(|| Error::Invariant(format!("case {} has no gold labels", c.case_id)))?;
            Ok((c.case_id.clone(), evaluate_maps(&c.pseudo, gold, catalog, surface_tolerance_mm)?))
        })
        .collect::<Result<_>>()?;
    if reports.is_empty() {
        return Err(Error::EmptyInput("corpus evaluation needs at least one case"));
    }

    let evaluations: Vec<CaseEvaluation> = reports
        .iter()
        .map(|(id, r)| CaseEvaluation {
            case_id: id.clone(),
            structures: r
                .per_structure
                .iter()
                .map(|(&label, m)| StructureRecord { label, name: catalog.name(label).to_string(), metrics: *m })
                .collect(),
        })
        .collect();

    let aggregates = catalog
        .labels()
        .map(|label| {
            let dscs: Vec<f64> = reports.iter().map(|(_, r)| r.per_structure[&label].dsc).collect();
            let nsds: Vec<f64> = reports.iter().filter_map(|(_, r)| r.per_structure[&label].nsd).collect();
            StructureAggregate {
                label,
                name: catalog.name(label).to_string(),
                dsc: Summary::of(&dscs).expect("nonempty corpus"),
                nsd: Summary::of(&nsds),
            }
        })
        .collect();

    let all: Vec<f64> = reports.iter().flat_map(|(_, r)| r.per_structure.values().map(|m| m.dsc)).collect();
    Ok(CorpusEvaluation {
        schema_version: SCHEMA_VERSION,
        cases: evaluations,
        aggregates,
        mean_dsc: all.iter().sum::<f64>() / all.len().max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_interpolate() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s.median, 2.5);
        assert_eq!(s.q1, 1.75);
        assert_eq!(s.q3, 3.25);
        assert_eq!(s.mean, 2.5);
        assert!(Summary::of(&[]).is_none());
    }
}
