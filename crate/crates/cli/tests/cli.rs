use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_annoloop");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("ANNOLOOP_OUT_DIR")
        .env_remove("ANNOLOOP_THREADS")
        .stdin(Stdio::null())
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_writes_pairs_sidecars_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("corpus");
    ok(&["--seed", "3", "generate", "--n-cases", "3", "--out", s(&out)]);
    let files = tree(&out);
    let count = |suffix: &str| files.keys().filter(|p| s(p).ends_with(suffix)).count();
    assert_eq!(count(".vol"), 3);
    assert_eq!(count(".pseudo.lbl"), 3);
    assert_eq!(files.keys().filter(|p| s(p).starts_with("case_") && s(p).ends_with(".json")).count(), 3);
    assert!(files.contains_key(Path::new("manifest.json")));
}

#[test]
fn regenerating_with_the_same_seed_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["--seed", "11", "generate", "--n-cases", "3", "--out", s(&a)]);
    ok(&["--seed", "11", "generate", "--n-cases", "3", "--out", s(&b), "--threads", "2"]);
    assert_eq!(tree(&a), tree(&b));
    ok(&["--seed", "12", "generate", "--n-cases", "3", "--out", s(&b), "--force"]);
    assert_ne!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());
}

#[test]
fn nonempty_output_needs_force() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("c");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("stale.txt"), "x").unwrap();
    let refused = run(&["generate", "--n-cases", "1", "--out", s(&out)]);
    assert_eq!(refused.status.code(), Some(3));
    assert!(out.join("stale.txt").exists());
    ok(&["generate", "--n-cases", "1", "--out", s(&out), "--force"]);
    assert!(!out.join("stale.txt").exists());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn out_dir_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("env");
    let status = Command::new(BIN)
        .args(["generate", "--n-cases", "1"])
        .env("ANNOLOOP_OUT_DIR", &out)
        .env("ANNOLOOP_THREADS", "1")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn evaluate_scores_clean_labels_at_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "[corpus]\nn_cases = 2\ngold_fraction = 1.0\n");
    let corpus = tmp.path().join("corpus");
    let eval = tmp.path().join("eval");
    ok(&["--config", &cfg, "generate", "--out", s(&corpus)]);
    ok(&["evaluate", "--corpus", s(&corpus), "--out", s(&eval)]);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(eval.join("evaluation.json")).unwrap()).unwrap();
    assert_eq!(v["mean_dsc"].as_f64(), Some(1.0));
    assert_eq!(v["schema_version"].as_u64(), Some(1));
}

#[test]
fn zero_iterations_write_only_the_initial_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "[corpus]\nn_cases = 3\ngold_fraction = 0.34\n\n[em]\nmax_iterations = 0\n");
    let out = tmp.path().join("run");
    ok(&["--config", &cfg, "run-loop", "--out", s(&out)]);
    let reports: Vec<_> = fs::read_dir(out.join("reports")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(reports, vec!["iteration_000.json"]);
    assert_eq!(fs::read_dir(out.join("changes")).unwrap().count(), 0);
    assert!(out.join("config.toml").exists());
}

#[test]
fn run_loop_tree_ignores_thread_count() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        tmp.path(),
        "[corpus]\nn_cases = 8\ngold_fraction = 0.25\n\n[em]\nmax_iterations = 2\nconvergence_epsilon = 0.0\n",
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["--config", &cfg, "--seed", "5", "--threads", "1", "run-loop", "--out", s(&a)]);
    ok(&["--config", &cfg, "--seed", "5", "--threads", "3", "run-loop", "--out", s(&b)]);
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.contains_key(Path::new("reports/iteration_002.json")));
    assert_eq!(ta, tb);
}

#[test]
fn every_json_artifact_is_versioned() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "[corpus]\nn_cases = 4\ngold_fraction = 0.5\n\n[em]\nmax_iterations = 1\n");
    let corpus = tmp.path().join("corpus");
    ok(&["--config", &cfg, "generate", "--out", s(&corpus)]);
    for (cmd, dir) in [("audit", "audit"), ("refine", "refine"), ("roc", "roc"), ("evaluate", "eval")] {
        ok(&["--config", &cfg, cmd, "--corpus", s(&corpus), "--out", s(&tmp.path().join(dir))]);
    }
    ok(&["--config", &cfg, "run-loop", "--out", s(&tmp.path().join("run"))]);
    let mut seen = 0;
    for (path, bytes) in tree(tmp.path()) {
        if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
            assert!(v.get("schema_version").is_some(), "{} lacks schema_version", path.display());
            seen += 1;
        }
    }
    assert!(seen > 20);
    let jsonl = fs::read_to_string(tmp.path().join("run/changes/iteration_001.jsonl")).unwrap();
    for line in jsonl.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("case_id").is_some());
    }
}

#[test]
fn roc_curve_matches_pinned_fixture() {
    let tmp = TempDir::new().unwrap();
    let cfg = fixture("roc_fixture.toml");
    let corpus = tmp.path().join("corpus");
    let out = tmp.path().join("roc");
    ok(&["--config", s(&cfg), "--seed", "7", "generate", "--out", s(&corpus)]);
    ok(&["--config", s(&cfg), "roc", "--corpus", s(&corpus), "--out", s(&out)]);
    let csv = fs::read_to_string(out.join("roc.csv")).unwrap();
    assert_eq!(csv, fs::read_to_string(fixture("roc_fixture.csv")).unwrap());

    let policy: serde_json::Value = serde_json::from_slice(&fs::read(out.join("policy.json")).unwrap()).unwrap();
    let chosen = policy["selected_threshold"].as_f64().unwrap();
    let first_hit = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .find(|r| r[1] >= 0.99)
        .unwrap();
    assert_eq!(chosen, first_hit[0]);
    let savings: serde_json::Value = serde_json::from_slice(&fs::read(out.join("savings.json")).unwrap()).unwrap();
    assert!(savings["ratio"].as_f64().unwrap() > 0.9);
}

#[test]
fn exit_codes_follow_the_error_class() {
    let tmp = TempDir::new().unwrap();
    let bad = config(tmp.path(), "[corpus]\ngold_fraction = 2.0\n");
    let out = tmp.path().join("x");
    assert_eq!(run(&["--config", &bad, "generate", "--out", s(&out)]).status.code(), Some(2));
    assert_eq!(run(&["generate", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["--threads", "0", "generate", "--out", s(&out)]).status.code(), Some(2));

    let missing = tmp.path().join("missing");
    assert_eq!(run(&["evaluate", "--corpus", s(&missing), "--out", s(&out)]).status.code(), Some(3));

    let empty_run = tmp.path().join("run");
    fs::create_dir_all(empty_run.join("escalations")).unwrap();
    assert_eq!(run(&["review", "--run", s(&empty_run)]).status.code(), Some(4));
}

fn escalation_entry(case: &str, structure: &str, label: u16) -> serde_json::Value {
    let one_mm = 1.0f64.to_bits();
    let overlay = |on: bool| serde_json::json!({"width": 2, "height": 1, "pixels": [on, true], "pixel_mm": [one_mm, one_mm]});
    serde_json::json!({
        "iteration": 1,
        "case_id": case,
        "structure": structure,
        "label": label,
        "reason": "expert_tie",
        "audit_dsc": 0.3,
        "candidates": [overlay(true), overlay(false)],
    })
}

#[test]
fn review_records_answers_from_a_file() {
    let tmp = TempDir::new().unwrap();
    let run_dir = tmp.path().join("run");
    fs::create_dir_all(run_dir.join("escalations")).unwrap();
    let queue = serde_json::json!({
        "schema_version": 1,
        "entries": [escalation_entry("case_0000", "liver", 1), escalation_entry("case_0001", "spleen", 2)],
        "resolved": {},
    });
    fs::write(run_dir.join("escalations/iteration_001.json"), queue.to_string()).unwrap();
    let answers = tmp.path().join("answers.txt");
    fs::write(&answers, "2\nskip\n").unwrap();

    let out = ok(&["review", "--run", s(&run_dir), "--answers", s(&answers)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("answered 1 of 2"));
    let res: serde_json::Value = serde_json::from_slice(&fs::read(run_dir.join("resolutions.json")).unwrap()).unwrap();
    assert_eq!(res["decisions"]["1/case_0000/liver"]["choice"], 1);
    assert!(res["decisions"]["1/case_0001/spleen"]["choice"].is_null());

    // Only the skipped entry is asked again.
    fs::write(&answers, "1\n").unwrap();
    let out = ok(&["review", "--run", s(&run_dir), "--answers", s(&answers)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("answered 1 of 1"));
    let res: serde_json::Value = serde_json::from_slice(&fs::read(run_dir.join("resolutions.json")).unwrap()).unwrap();
    assert_eq!(res["decisions"]["1/case_0001/spleen"]["choice"], 0);
}

#[test]
fn review_without_a_terminal_asks_for_another_oracle() {
    let tmp = TempDir::new().unwrap();
    let run_dir = tmp.path().join("run");
    fs::create_dir_all(run_dir.join("escalations")).unwrap();
    let queue = serde_json::json!({"schema_version": 1, "entries": [], "resolved": {}});
    fs::write(run_dir.join("escalations/iteration_001.json"), queue.to_string()).unwrap();
    let out = run(&["review", "--run", s(&run_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("terminal"));
}
