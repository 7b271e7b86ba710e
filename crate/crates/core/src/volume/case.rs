use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::grid::{LabelMap, VoxelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TumorType {
    #[serde(rename = "PDAC")]
    Pdac,
    #[serde(rename = "cyst")]
    Cyst,
    #[serde(rename = "PNET")]
    Pnet,
}

impl TumorType {
    pub const ALL: [TumorType; 3] = [TumorType::Pdac, TumorType::Cyst, TumorType::Pnet];

    pub fn index(self) -> usize {
        match self {
            TumorType::Pdac => 0,
            TumorType::Cyst => 1,
            TumorType::Pnet => 2,
        }
    }
}

/// Structured stand-in for a radiology report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawReport")]
pub struct StructuredReport {
    tumor_present: bool,
    tumor_type: Option<TumorType>,
    tumor_count: u32,
}

#[derive(Deserialize)]
struct RawReport {
    tumor_present: bool,
    tumor_type: Option<TumorType>,
    tumor_count: u32,
}

impl TryFrom<RawReport> for StructuredReport {
    type Error = Error;

    fn try_from(r: RawReport) -> Result<Self> {
        StructuredReport::new(r.tumor_present, r.tumor_type, r.tumor_count)
    }
}

impl StructuredReport {
    pub fn new(tumor_present: bool, tumor_type: Option<TumorType>, tumor_count: u32) -> Result<Self> {
        if tumor_present != (tumor_count > 0) {
            return Err(Error::Invariant(format!(
                "report: tumor_present={tumor_present} but tumor_count={tumor_count}"
            )));
        }
        if tumor_type.is_some() != tumor_present {
            return Err(Error::Invariant(
                "report: tumor_type must be present exactly when a tumor is".into(),
            ));
        }
        Ok(Self { tumor_present, tumor_type, tumor_count })
    }

    pub fn negative() -> Self {
        Self { tumor_present: false, tumor_type: None, tumor_count: 0 }
    }

    pub fn tumor_present(&self) -> bool {
        self.tumor_present
    }

    pub fn tumor_type(&self) -> Option<TumorType> {
        self.tumor_type
    }

    pub fn tumor_count(&self) -> u32 {
        self.tumor_count
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Arterial,
    Venous,
    Noncontrast,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseMeta {
    pub age: u32,
    pub sex: Sex,
    pub phase: Phase,
    pub is_gold: bool,
}

/// One scan with its working annotation, optional expert annotation and report.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord {
    pub case_id: String,
    pub volume: VoxelGrid<f32>,
    pub pseudo: LabelMap,
    pub gold: Option<LabelMap>,
    pub report: StructuredReport,
    pub meta: CaseMeta,
}

impl CaseRecord {
    pub fn new(
        case_id: impl Into<String>,
        volume: VoxelGrid<f32>,
        pseudo: LabelMap,
        gold: Option<LabelMap>,
        report: StructuredReport,
        meta: CaseMeta,
    ) -> Result<Self> {
        let case = Self { case_id: case_id.into(), volume, pseudo, gold, report, meta };
        case.validate()?;
        Ok(case)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.pseudo.matches_grid(&self.volume) {
            return Err(Error::shape(format!(
                "case {}: pseudo labels do not share the volume lattice",
                self.case_id
            )));
        }
        if let Some(g) = &self.gold {
            if !g.matches_grid(&self.volume) {
                return Err(Error::shape(format!(
                    "case {}: gold labels do not share the volume lattice",
                    self.case_id
                )));
            }
        }
        if self.meta.is_gold && self.gold.is_none() {
            return Err(Error::Invariant(format!(
                "case {} is flagged gold but carries no gold labels",
                self.case_id
            )));
        }
        Ok(())
    }

    /// Copy with hidden ground truth withheld. Cases flagged `is_gold` keep
    /// their expert labels: those are part of the working corpus, not an
    /// evaluation reference.
    pub fn without_gold(&self) -> Self {
        if self.meta.is_gold {
            self.clone()
        } else {
            Self { gold: None, ..self.clone() }
        }
    }
}
