use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::config::{Convergence, EmConfig};
use super::expectation::{expectation_pass, ActionCounts, ExpectationStats, ExpertContext};
use super::maximization::{maximization_pass, TrainingMix};
use super::oracle::{EscalationQueue, Resolutions};
use crate::error::Result;
use crate::metrics::evaluate_corpus;
use crate::phantom::PhantomSpec;
use crate::verifier::{fit_model, ChangeLog, GaussianIntensityModel};
use crate::volume::io::{write_corpus, SCHEMA_VERSION};
use crate::volume::{CaseRecord, Label, StructureCatalog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureDsc {
    pub label: Label,
    pub name: String,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldAgreement {
    pub mean_dsc: f64,
    pub per_structure: Vec<StructureDsc>,
}

/// Pseudo-vs-gold agreement, or `None` when any case lacks gold.
pub fn gold_agreement(corpus: &[CaseRecord], catalog: &StructureCatalog) -> Result<Option<GoldAgreement>> {
    if corpus.is_empty() || corpus.iter().any(|c| c.gold.is_none()) {
        return Ok(None);
    }
    let eval = evaluate_corpus(corpus, catalog, None)?;
    Ok(Some(GoldAgreement {
        mean_dsc: eval.mean_dsc,
        per_structure: eval
            .aggregates
            .iter()
            .map(|a| StructureDsc { label: a.label, name: a.name.clone(), mean: a.dsc.mean, median: a.dsc.median })
            .collect(),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub schema_version: u32,
    /// 0 for the state before the first pass.
    pub iteration: usize,
    pub gold: Option<GoldAgreement>,
    pub counts: ActionCounts,
    pub expectation: Option<ExpectationStats>,
    pub training: Option<TrainingMix>,
    pub budget_breach: bool,
    /// Snapshot id of the model fitted at the end of this iteration.
    pub model_snapshot: String,
    /// Not serialized, so run directories stay byte-reproducible.
    #[serde(skip)]
    pub wall_clock: Duration,
}

impl IterationReport {
    pub fn mean_gold_dsc(&self) -> Option<f64> {
        self.gold.as_ref().map(|g| g.mean_dsc)
    }
}

#[derive(Debug, Clone)]
pub struct IterationArtifacts {
    pub report: IterationReport,
    pub model: GaussianIntensityModel,
    pub changes: ChangeLog,
    pub queue: EscalationQueue,
}

#[derive(Debug, Clone)]
pub struct EmRun {
    pub corpus: Vec<CaseRecord>,
    pub model: GaussianIntensityModel,
    pub initial_model: GaussianIntensityModel,
    pub baseline: IterationReport,
    pub iterations: Vec<IterationArtifacts>,
    /// Set when the stopping rule fired before `max_iterations`.
    pub stopped_early: bool,
}

impl EmRun {
    /// Baseline report followed by one report per iteration.
    pub fn reports(&self) -> Vec<&IterationReport> {
        std::iter::once(&self.baseline).chain(self.iterations.iter().map(|a| &a.report)).collect()
    }

    pub fn resolutions(&self) -> Resolutions {
        let decisions = self.iterations.iter().flat_map(|a| a.queue.resolved.clone()).collect();
        Resolutions { schema_version: SCHEMA_VERSION, decisions }
    }
}

fn should_stop(cfg: &EmConfig, prev: &IterationReport, cur: &IterationReport) -> bool {
    let eps = cfg.convergence_epsilon;
    if eps == 0.0 {
        return false;
    }
    let by_changes = || {
        let s = cur.expectation.unwrap_or_default();
        (s.changed as f64) < eps * s.audited as f64 || s.audited == 0
    };
    match (cfg.convergence, prev.mean_gold_dsc(), cur.mean_gold_dsc()) {
        (Convergence::GoldDsc, Some(a), Some(b)) => b - a < eps,
        _ => by_changes(),
    }
}

/// Alternates expectation and maximization passes from a model fitted on the
/// input corpus.
pub fn run_em(
    corpus: Vec<CaseRecord>,
    cfg: &EmConfig,
    spec: &PhantomSpec,
    catalog: &StructureCatalog,
    ctx: &ExpertContext<'_>,
) -> Result<EmRun> {
    cfg.validate()?;
    let start = Instant::now();
    let initial_model = fit_model(&corpus, None, catalog)?;
    let baseline = IterationReport {
        schema_version: SCHEMA_VERSION,
        iteration: 0,
        gold: gold_agreement(&corpus, catalog)?,
        counts: ActionCounts::default(),
        expectation: None,
        training: None,
        budget_breach: false,
        model_snapshot: initial_model.snapshot_id(),
        wall_clock: start.elapsed(),
    };
    let mut run = EmRun {
        corpus,
        model: initial_model.clone(),
        initial_model,
        baseline,
        iterations: Vec::new(),
        stopped_early: false,
    };
    for it in 1..=cfg.max_iterations {
        let t = Instant::now();
        let e = expectation_pass(&run.corpus, &run.model, catalog, cfg, ctx, it)?;
        let (model, mix) = maximization_pass(&e.corpus, &e.audits, cfg, spec, catalog, it)?;
        let report = IterationReport {
            schema_version: SCHEMA_VERSION,
            iteration: it,
            gold: gold_agreement(&e.corpus, catalog)?,
            counts: e.stats.counts,
            expectation: Some(e.stats),
            training: Some(mix),
            budget_breach: e.stats.escalation_demand > e.stats.escalation_budget,
            model_snapshot: model.snapshot_id(),
            wall_clock: t.elapsed(),
        };
        log::info!(
            "iteration {it}: {:?}, gold dsc {:?}",
            report.counts,
            report.mean_gold_dsc()
        );
        let stop = should_stop(cfg, run.iterations.last().map_or(&run.baseline, |a| &a.report), &report);
        run.corpus = e.corpus;
        run.model = model.clone();
        run.iterations.push(IterationArtifacts { report, model, changes: e.changes, queue: e.queue });
        if stop {
            run.stopped_early = it < cfg.max_iterations;
            break;
        }
    }
    Ok(run)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub schema_version: u32,
    pub snapshot_id: String,
    pub model: GaussianIntensityModel,
}

impl ModelSnapshot {
    pub fn new(model: GaussianIntensityModel) -> Self {
        Self { schema_version: SCHEMA_VERSION, snapshot_id: model.snapshot_id(), model }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Reads a snapshot file or a bare model file.
    pub fn load(path: &Path) -> Result<GaussianIntensityModel> {
        let bytes = std::fs::read(path)?;
        match serde_json::from_slice::<ModelSnapshot>(&bytes) {
            Ok(s) => Ok(s.model),
            Err(_) => Ok(serde_json::from_slice(&bytes)?),
        }
    }
}

fn write_model(path: &Path, model: &GaussianIntensityModel) -> Result<()> {
    ModelSnapshot::new(model.clone()).save(path)
}

/// On-disk form of one iteration's escalation queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscalationFile {
    pub schema_version: u32,
    #[serde(flatten)]
    pub queue: EscalationQueue,
}

impl EscalationFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Writes reports, model snapshots, change logs, escalation queues,
/// resolutions and the final corpus under `dir`.
pub fn persist_run(dir: &Path, run: &EmRun, catalog: &StructureCatalog) -> Result<()> {
    for sub in ["reports", "models", "changes", "escalations"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }
    write_json(&dir.join("reports/iteration_000.json"), &run.baseline)?;
    write_model(&dir.join("models/model_000.json"), &run.initial_model)?;
    for a in &run.iterations {
        let k = a.report.iteration;
        write_json(&dir.join(format!("reports/iteration_{k:03}.json")), &a.report)?;
        write_model(&dir.join(format!("models/model_{k:03}.json")), &a.model)?;
        std::fs::write(dir.join(format!("changes/iteration_{k:03}.jsonl")), a.changes.to_jsonl())?;
        write_json(
            &dir.join(format!("escalations/iteration_{k:03}.json")),
            &EscalationFile { schema_version: SCHEMA_VERSION, queue: a.queue.clone() },
        )?;
    }
    run.resolutions().save(&dir.join("resolutions.json"))?;
    write_corpus(&dir.join("corpus"), catalog, &run.corpus)?;
    Ok(())
}
