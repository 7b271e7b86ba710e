use std::fs;
use std::io::{BufRead, BufReader, IsTerminal};
use std::path::{Path, PathBuf};
use std::time::Duration;

use annoloop_core::config::{JudgeSelection, OracleSelection, RunConfig};
use annoloop_core::em::{
    expectation_pass, interactive_review, persist_run, run_em, ActionCounts, EscalationFile, ExpectationStats,
    ExpertContext, HumanOracle, InteractiveCli, ModelSnapshot, Resolutions, SimulatedExpert, TieKeeper,
};
use annoloop_core::expert::{ExternalJudge, Judge, PriorTable, RuleJudge};
use annoloop_core::metrics::evaluate_corpus;
use annoloop_core::phantom::{generate_corpus, InjectionLog};
use annoloop_core::roc::{split_by_gold, tumor_workflow};
use annoloop_core::verifier::{audit_case, fit_model, AuditAction, AuditOutcome, GaussianIntensityModel};
use annoloop_core::volume::io::{read_corpus, write_corpus, SCHEMA_VERSION};
use annoloop_core::volume::{CaseRecord, StructureCatalog};
use annoloop_core::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::{Cli, Command, OutArgs};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_INVARIANT: u8 = 4;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Spec(_) | Error::Toml(_) | Error::Catalog(_) | Error::UnknownLabel { .. } => {
            EXIT_CONFIG
        }
        Error::Io(_) | Error::Format(_) | Error::Json(_) => EXIT_IO,
        _ => EXIT_INVARIANT,
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default_config(),
    };
    if let Some(s) = cli.seed {
        cfg.em.seed = s;
    }
    match cli.command {
        Command::Generate { out, n_cases } => generate(&mut cfg, &out, n_cases),
        Command::Audit { corpus, model, out } => audit(&cfg, &corpus, model.as_deref(), &out),
        Command::Refine { corpus, model, out } => refine(&cfg, &corpus, model.as_deref(), &out),
        Command::Roc { corpus, model, out } => roc(&cfg, &corpus, model.as_deref(), &out),
        Command::RunLoop { corpus, out } => run_loop(&cfg, corpus.as_deref(), &out),
        Command::Evaluate { corpus, nsd_tolerance, out } => evaluate(&corpus, nsd_tolerance, &out),
        Command::Review { run, iteration, answers } => review(&run, iteration, answers.as_deref()),
    }
}

fn prepare_out(out: &OutArgs) -> Result<&Path> {
    let dir = out.out.as_path();
    if dir.exists() {
        let nonempty = fs::read_dir(dir)?.next().is_some();
        if nonempty && !out.force {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                format!("{} is not empty; pass --force to overwrite", dir.display()),
            )));
        }
        if nonempty {
            fs::remove_dir_all(dir)?;
        }
    }
    fs::create_dir_all(dir)?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct Versioned<'a, T> {
    schema_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

fn versioned<T>(body: &T) -> Versioned<'_, T> {
    Versioned { schema_version: SCHEMA_VERSION, body }
}

fn load_model(path: Option<&Path>, cases: &[CaseRecord], catalog: &StructureCatalog) -> Result<GaussianIntensityModel> {
    match path {
        Some(p) => ModelSnapshot::load(p),
        None => fit_model(cases, None, catalog),
    }
}

fn build_judge(cfg: &RunConfig, priors: &PriorTable) -> Result<Box<dyn Judge>> {
    let rule = RuleJudge::from_table(priors);
    Ok(match &cfg.judge {
        JudgeSelection::Rule => Box::new(rule),
        JudgeSelection::External { command, timeout_ms } => {
            Box::new(ExternalJudge::new(command.clone(), Duration::from_millis(*timeout_ms), rule)?)
        }
    })
}

fn terminal_reviewer() -> Result<InteractiveCli<Box<dyn BufRead + Send>, std::io::Stderr>> {
    if !std::io::stdin().is_terminal() {
        return Err(Error::Config(
            "interactive review needs a terminal on stdin; use the simulated oracle or --answers".into(),
        ));
    }
    Ok(InteractiveCli::new(Box::new(BufReader::new(std::io::stdin())), std::io::stderr()))
}

fn build_oracle(cfg: &RunConfig) -> Result<Box<dyn HumanOracle>> {
    Ok(match cfg.oracle {
        OracleSelection::Simulated { accuracy } => Box::new(SimulatedExpert { accuracy, seed: cfg.em.seed }),
        OracleSelection::TieKeeper => Box::new(TieKeeper),
        OracleSelection::Interactive => Box::new(terminal_reviewer()?),
    })
}

#[derive(Serialize)]
struct InjectionRecord<'a> {
    case_id: &'a str,
    #[serde(flatten)]
    log: &'a InjectionLog,
}

#[derive(Serialize)]
struct InjectionFile<'a> {
    schema_version: u32,
    seed: u64,
    cases: Vec<InjectionRecord<'a>>,
}

fn generate(cfg: &mut RunConfig, out: &OutArgs, n_cases: Option<usize>) -> Result<()> {
    if let Some(n) = n_cases {
        cfg.corpus.n_cases = n;
    }
    cfg.validate()?;
    let catalog = cfg.phantom.catalog()?;
    let corpus = generate_corpus(&cfg.phantom, &cfg.noise, cfg.corpus.n_cases, cfg.corpus.gold_fraction, cfg.em.seed)?;
    let dir = prepare_out(out)?;
    write_corpus(dir, &catalog, &corpus.cases)?;
    let cases = corpus
        .cases
        .iter()
        .zip(&corpus.logs)
        .map(|(c, log)| InjectionRecord { case_id: &c.case_id, log })
        .collect();
    write_json(
        &dir.join("injections.json"),
        &InjectionFile { schema_version: SCHEMA_VERSION, seed: cfg.em.seed, cases },
    )?;
    log::info!("wrote {} cases to {}", corpus.cases.len(), dir.display());
    Ok(())
}

#[derive(Serialize)]
struct AuditFile<'a> {
    schema_version: u32,
    model_snapshot: String,
    counts: ActionCounts,
    cases: &'a [AuditOutcome],
}

fn audit(cfg: &RunConfig, corpus: &Path, model: Option<&Path>, out: &OutArgs) -> Result<()> {
    cfg.validate()?;
    let (catalog, cases) = read_corpus(corpus)?;
    let model = load_model(model, &cases, &catalog)?;
    let thresholds = cfg.em.thresholds();
    let outcomes: Vec<AuditOutcome> =
        cases.par_iter().map(|c| audit_case(&model, c, &catalog, &thresholds)).collect::<Result<_>>()?;
    let mut counts = ActionCounts::default();
    for s in outcomes.iter().flat_map(|o| &o.structures) {
        match s.action {
            AuditAction::Keep => counts.keep += 1,
            AuditAction::AutoReplace => counts.auto_replace += 1,
            AuditAction::RouteToExpert => counts.route += 1,
        }
    }
    let dir = prepare_out(out)?;
    write_json(
        &dir.join("audit.json"),
        &AuditFile { schema_version: SCHEMA_VERSION, model_snapshot: model.snapshot_id(), counts, cases: &outcomes },
    )?;
    ModelSnapshot::new(model).save(&dir.join("model.json"))
}

#[derive(Serialize)]
struct RefineFile {
    schema_version: u32,
    model_snapshot: String,
    stats: ExpectationStats,
}

fn refine(cfg: &RunConfig, corpus: &Path, model: Option<&Path>, out: &OutArgs) -> Result<()> {
    cfg.validate()?;
    let (catalog, cases) = read_corpus(corpus)?;
    let model = load_model(model, &cases, &catalog)?;
    let priors = cfg.prior_table()?;
    let judge = build_judge(cfg, &priors)?;
    let oracle = build_oracle(cfg)?;
    let ctx = ExpertContext { judge: judge.as_ref(), priors: &priors, oracle: oracle.as_ref() };
    let pass = expectation_pass(&cases, &model, &catalog, &cfg.em, &ctx, 1)?;
    let dir = prepare_out(out)?;
    write_corpus(&dir.join("corpus"), &catalog, &pass.corpus)?;
    fs::write(dir.join("changes.jsonl"), pass.changes.to_jsonl())?;
    EscalationFile { schema_version: SCHEMA_VERSION, queue: pass.queue }.save(&dir.join("escalations.json"))?;
    write_json(
        &dir.join("refine.json"),
        &RefineFile { schema_version: SCHEMA_VERSION, model_snapshot: model.snapshot_id(), stats: pass.stats },
    )?;
    ModelSnapshot::new(model).save(&dir.join("model.json"))
}

fn roc(cfg: &RunConfig, corpus: &Path, model: Option<&Path>, out: &OutArgs) -> Result<()> {
    cfg.validate()?;
    let (catalog, cases) = read_corpus(corpus)?;
    let model = load_model(model, &cases, &catalog)?;
    let (validation, target) = split_by_gold(&cases);
    if validation.is_empty() {
        return Err(Error::EmptyInput("the corpus has no gold-flagged cases to select a threshold on"));
    }
    let flow = tumor_workflow(&validation, &target, &model, &catalog, &cfg.roc, &cfg.cost)?;
    let dir = prepare_out(out)?;
    fs::write(dir.join("roc.csv"), flow.curve.to_csv())?;
    write_json(&dir.join("policy.json"), &versioned(&flow.policy))?;
    write_json(&dir.join("savings.json"), &versioned(&flow.savings))?;
    write_json(&dir.join("workflow.json"), &flow)?;
    println!(
        "threshold {} sensitivity {} savings {:.4}",
        flow.policy.selected_threshold, flow.policy.achieved_sensitivity, flow.savings.ratio
    );
    Ok(())
}

fn run_loop(cfg: &RunConfig, corpus: Option<&Path>, out: &OutArgs) -> Result<()> {
    cfg.validate()?;
    let (catalog, cases) = match corpus {
        Some(p) => read_corpus(p)?,
        None => (
            cfg.phantom.catalog()?,
            generate_corpus(&cfg.phantom, &cfg.noise, cfg.corpus.n_cases, cfg.corpus.gold_fraction, cfg.em.seed)?
                .cases,
        ),
    };
    let priors = cfg.prior_table()?;
    let judge = build_judge(cfg, &priors)?;
    let oracle = build_oracle(cfg)?;
    let ctx = ExpertContext { judge: judge.as_ref(), priors: &priors, oracle: oracle.as_ref() };
    let run = run_em(cases, &cfg.em, &cfg.phantom, &catalog, &ctx)?;
    let dir = prepare_out(out)?;
    fs::write(dir.join("config.toml"), cfg.to_toml_string())?;
    persist_run(dir, &run, &catalog)?;
    for r in run.reports() {
        match r.mean_gold_dsc() {
            Some(d) => println!("iteration {} mean dsc {d:.4}", r.iteration),
            None => println!("iteration {}", r.iteration),
        }
    }
    Ok(())
}

fn evaluate(corpus: &Path, nsd_tolerance: Option<f64>, out: &OutArgs) -> Result<()> {
    if let Some(t) = nsd_tolerance {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("--nsd-tolerance {t} must be a finite nonnegative distance")));
        }
    }
    let (catalog, cases) = read_corpus(corpus)?;
    let eval = evaluate_corpus(&cases, &catalog, nsd_tolerance)?;
    let dir = prepare_out(out)?;
    write_json(&dir.join("evaluation.json"), &eval)?;
    println!("mean dsc {:.4}", eval.mean_dsc);
    Ok(())
}

fn latest_escalations(run: &Path) -> Result<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(run.join("escalations"))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.sort();
    files.pop().ok_or_else(|| Error::Invariant(format!("{} holds no escalation files", run.display())))
}

fn review(run: &Path, iteration: Option<usize>, answers: Option<&Path>) -> Result<()> {
    let path = match iteration {
        Some(k) => run.join(format!("escalations/iteration_{k:03}.json")),
        None => latest_escalations(run)?,
    };
    let mut file = EscalationFile::load(&path)?;
    let res_path = run.join("resolutions.json");
    let mut resolutions =
        if res_path.exists() { Resolutions::load(&res_path)? } else { Resolutions { schema_version: SCHEMA_VERSION, ..Default::default() } };
    for e in &file.queue.entries {
        if let Some(d) = resolutions.decisions.get(&e.key()) {
            file.queue.resolved.insert(e.key(), d.clone());
        }
    }
    let reviewer = match answers {
        Some(p) => InteractiveCli::new(Box::new(BufReader::new(fs::File::open(p)?)) as Box<dyn BufRead + Send>, std::io::stderr()),
        None => terminal_reviewer()?,
    };
    let open = file.queue.unresolved().count();
    let answered = interactive_review(&mut file.queue, &reviewer)?;
    resolutions.decisions.extend(file.queue.resolved.clone());
    resolutions.save(&res_path)?;
    file.save(&path)?;
    println!("answered {answered} of {open} open escalations");
    Ok(())
}
