use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantom::AugmentSpec;
use crate::verifier::AuditThresholds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataMix {
    pub labeled: f64,
    pub synthetic: f64,
    pub selective: f64,
}

/// What ends the loop before `max_iterations`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    /// Corpus mean DSC against gold improved by less than epsilon. Falls back
    /// to `change_count` when some case lacks gold labels.
    GoldDsc,
    /// Fewer than `epsilon * audited` structures changed in the last pass.
    ChangeCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmConfig {
    pub max_iterations: usize,
    pub auto_replace_dsc: f64,
    pub route_dsc: f64,
    pub escalation_budget_fraction: f64,
    /// Zero disables early stopping.
    pub convergence_epsilon: f64,
    #[serde(default = "default_convergence")]
    pub convergence: Convergence,
    pub annealing_enabled: bool,
    pub annealing_weight: f64,
    pub data_mix: DataMix,
    /// Ties whose candidates agree at or above this DSC keep the incumbent
    /// without escalation.
    pub tie_agreement_dsc: f64,
    pub seed: u64,
    #[serde(default)]
    pub augment: AugmentSpec,
}

fn default_convergence() -> Convergence {
    Convergence::GoldDsc
}

impl EmConfig {
    pub fn thresholds(&self) -> AuditThresholds {
        AuditThresholds { auto_replace_dsc: self.auto_replace_dsc, route_dsc: self.route_dsc }
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds().validate()?;
        let m = self.data_mix;
        let parts = [m.labeled, m.synthetic, m.selective];
        if parts.iter().any(|v| !(*v >= 0.0)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("data mix {m:?} must be nonnegative and sum to 1")));
        }
        if !(self.escalation_budget_fraction > 0.0 && self.escalation_budget_fraction < 1.0) {
            return Err(Error::Config("escalation_budget_fraction must lie in (0, 1)".into()));
        }
        if !(self.convergence_epsilon >= 0.0) {
            return Err(Error::Config("convergence_epsilon must be nonnegative".into()));
        }
        if !(self.annealing_weight > 0.0) {
            return Err(Error::Config("annealing_weight must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.tie_agreement_dsc) {
            return Err(Error::Config("tie_agreement_dsc must lie in [0, 1]".into()));
        }
        let a = self.augment;
        if !(a.intensity_jitter >= 0.0) || !(a.tumor_radius_scale[0] > 0.0 && a.tumor_radius_scale[0] <= a.tumor_radius_scale[1]) {
            return Err(Error::Config(format!("invalid augmentation {a:?}")));
        }
        Ok(())
    }
}
