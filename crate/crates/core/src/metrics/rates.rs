use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Detection tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub const fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    fn ratio<F: Real>(num: u64, den: u64, rate: &'static str) -> Result<F> {
        if den == 0 {
            return Err(Error::UndefinedRate { rate });
        }
        Ok(F::of(num as f64 / den as f64))
    }

    /// TP / (TP + FN), also called recall.
    pub fn sensitivity<F: Real>(&self) -> Result<F> {
        Self::ratio(self.tp, self.tp + self.fn_, "sensitivity")
    }

    /// TN / (TN + FP).
    pub fn specificity<F: Real>(&self) -> Result<F> {
        Self::ratio(self.tn, self.tn + self.fp, "specificity")
    }

    /// TP / (TP + FP).
    pub fn precision<F: Real>(&self) -> Result<F> {
        Self::ratio(self.tp, self.tp + self.fp, "precision")
    }

    /// Harmonic mean of precision and recall.
    pub fn f1<F: Real>(&self) -> Result<F> {
        let p: F = self.precision()?;
        let r: F = self.sensitivity()?;
        if p + r == F::zero() {
            return Err(Error::UndefinedRate { rate: "f1" });
        }
        Ok(F::of(2.0) * p * r / (p + r))
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(self.tp + o.tp, self.tn + o.tn, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRates<F> {
    pub sensitivity: F,
    pub specificity: F,
    pub f1: F,
}

/// Sensitivity, specificity and F1 together; fails naming the first undefined rate.
pub fn classification_rates<F: Real>(c: &ConfusionCounts) -> Result<ClassificationRates<F>> {
    Ok(ClassificationRates {
        sensitivity: c.sensitivity()?,
        specificity: c.specificity()?,
        f1: c.f1()?,
    })
}
