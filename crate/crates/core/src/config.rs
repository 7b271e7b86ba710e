//! Run configuration: a TOML document with one table per component.
//!
//! The shipped defaults live in `config/default.toml` and the anatomical
//! prior table in `config/priors.toml`; both are compiled in. A user file is
//! merged over the defaults table by table, so it only needs the keys it
//! changes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::em::EmConfig;
use crate::error::{Error, Result};
use crate::expert::PriorTable;
use crate::phantom::{NoiseSpec, PhantomSpec};
use crate::roc::CostModel;

pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");
pub const DEFAULT_PRIORS: &str = include_str!("../config/priors.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_cases: usize,
    pub gold_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JudgeSelection {
    Rule,
    /// Child process speaking the line-delimited JSON judge protocol.
    External {
        command: Vec<String>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_timeout_ms() -> u64 {
    10_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSelection {
    /// Picks the candidate closest to gold with probability `accuracy`.
    Simulated { accuracy: f64 },
    /// Always keeps the incumbent; never reads gold.
    TieKeeper,
    Interactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RocConfig {
    pub target_sensitivity: f64,
    pub thresholds: usize,
    pub min_fp_voxels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub phantom: PhantomSpec,
    pub noise: NoiseSpec,
    pub corpus: CorpusConfig,
    pub em: EmConfig,
    pub cost: CostModel,
    pub roc: RocConfig,
    pub judge: JudgeSelection,
    pub oracle: OracleSelection,
    /// Prior table file; the built-in table when absent. Relative paths
    /// resolve against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priors: Option<PathBuf>,
}

impl RunConfig {
    pub fn default_config() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG).expect("shipped config is valid")
    }

    /// Parses a complete configuration document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `text` as overrides on top of the shipped defaults.
    pub fn from_overrides(text: &str) -> Result<Self> {
        let mut base: toml::Table = toml::from_str(DEFAULT_CONFIG)?;
        let user: toml::Table = toml::from_str(text)?;
        merge(&mut base, user);
        let cfg: RunConfig = base.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads an override file and resolves the prior table path.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_overrides(&text)?;
        if let Some(p) = &cfg.priors {
            let resolved = if p.is_relative() {
                path.parent().unwrap_or(Path::new(".")).join(p)
            } else {
                p.clone()
            };
            if !resolved.is_file() {
                return Err(Error::Config(format!("prior table {} does not exist", resolved.display())));
            }
            cfg.priors = Some(resolved);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| match e {
            Error::Spec(m) => Error::Config(m),
            other => other,
        };
        self.phantom.validate().map_err(wrap)?;
        self.noise.validate().map_err(wrap)?;
        self.em.validate()?;
        self.cost.validate()?;
        if self.corpus.n_cases == 0 || !(0.0..=1.0).contains(&self.corpus.gold_fraction) {
            return Err(Error::Config("corpus needs n_cases >= 1 and gold_fraction in [0, 1]".into()));
        }
        if !(self.roc.target_sensitivity > 0.0 && self.roc.target_sensitivity <= 1.0) || self.roc.thresholds < 2 {
            return Err(Error::Config("roc needs a target in (0, 1] and at least two thresholds".into()));
        }
        if let OracleSelection::Simulated { accuracy } = self.oracle {
            if !(0.0..=1.0).contains(&accuracy) {
                return Err(Error::Config("simulated oracle accuracy must lie in [0, 1]".into()));
            }
        }
        if let JudgeSelection::External { command, .. } = &self.judge {
            if command.is_empty() {
                return Err(Error::Config("external judge command is empty".into()));
            }
        }
        Ok(())
    }

    pub fn prior_table(&self) -> Result<PriorTable> {
        let text = match &self.priors {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read prior table {}: {e}", p.display())))?,
            None => DEFAULT_PRIORS.to_string(),
        };
        let catalog = self.phantom.catalog()?;
        PriorTable::from_toml_str(&text, &catalog)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Recursive table merge; arrays and scalars in `over` replace those in `base`.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_defaults_load() {
        let cfg = RunConfig::default_config();
        assert_eq!(cfg.phantom.dims, [64, 64, 64]);
        assert_eq!(cfg.corpus.n_cases, 100);
        assert_eq!(cfg.em.route_dsc, 0.5);
        assert_eq!(cfg.cost.seconds_per_scratch_annotation, 270.0);
        assert!(cfg.prior_table().is_ok());
    }

    #[test]
    fn overrides_merge_per_key() {
        let cfg = RunConfig::from_overrides("[em]\nmax_iterations = 0\n[corpus]\nn_cases = 3\n").unwrap();
        assert_eq!(cfg.em.max_iterations, 0);
        assert_eq!(cfg.em.route_dsc, 0.5);
        assert_eq!(cfg.corpus.n_cases, 3);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let bad = RunConfig::from_overrides("[noise]\ndelete = 1.5\n");
        assert!(matches!(bad, Err(Error::Config(_))));
        let bad = RunConfig::from_overrides("[em.data_mix]\nlabeled = 0.5\n");
        assert!(matches!(bad, Err(Error::Config(_))));
        assert!(RunConfig::from_overrides("[em]\nunknown_key = 1\n").is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let cfg = RunConfig::default_config();
        assert_eq!(RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    }
}
