use std::path::Path;
use std::process::Command;

use medaug::exp::{regenerate_report, run_experiment, ExperimentConfig, ExperimentMode};

const SMALL: &str = "
[experiment]
name = small
mode = compare
seeds = 0, 1

[benchmark]
num_docs = 400
positive_fraction = 0.3

[generator]
d_model = 16
heads = 2
layers = 1
context = 48
epochs = 1

[classifier]
epochs = 2

[augmentation]
counts = 20, 40
max_len = 24
noise_fraction = 0.2

[strategies]
list = none, base, confidence_filter, medaug
keep_fraction = 0.5

[distill]
tau = 0, 1
";

fn small() -> ExperimentConfig {
    ExperimentConfig::parse(SMALL, Path::new("small.ini")).unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn reruns_are_byte_identical_and_thread_count_free() {
    let cfg = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_experiment(&cfg, a.path(), 1).unwrap();
    let rb = run_experiment(&cfg, b.path(), 2).unwrap();
    for f in ["results.csv", "runs.jsonl", "config.json", "summary.md"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f} differs");
    }
    // none + 2 counts x (base + filter + tau 0 + tau 1)
    assert_eq!(ra.table.rows.len(), 9);
    assert_eq!(ra.records.len(), 18);
    assert_eq!(ra.records.iter().map(|r| r.seed).collect::<Vec<_>>()[..2], [0, 0]);
    assert!(rb.records.iter().all(|r| r.test.is_some()));

    let csv = String::from_utf8(read(a.path(), "results.csv")).unwrap();
    assert!(csv.starts_with("strategy,count,prompt,balanced,keep_fraction,tau,kl_scope,seeds,valid_auroc_mean"));
    assert_eq!(csv.lines().count(), 10);

    std::fs::remove_file(a.path().join("results.csv")).unwrap();
    let table = regenerate_report(a.path()).unwrap();
    assert_eq!(table, ra.table);
    assert_eq!(read(a.path(), "results.csv"), read(b.path(), "results.csv"));
}

#[test]
fn prefix_pools_share_documents() {
    let mut cfg = small();
    cfg.seeds = vec![3];
    cfg.mode = ExperimentMode::Sweep;
    let dir = tempfile::tempdir().unwrap();
    let run = run_experiment(&cfg, dir.path(), 1).unwrap();
    assert!(run.records.iter().all(|r| r.test.is_none()));
    let base: Vec<_> = run.records.iter().filter(|r| r.cell.strategy.name() == "base").collect();
    assert_eq!(base.len(), 2);
    assert_eq!(base[0].generator_hash, base[1].generator_hash);
    assert!(base[0].augmentation.kept <= base[1].augmentation.kept);
}

#[test]
fn regenerate_rejects_foreign_runs() {
    let mut cfg = small();
    cfg.seeds = vec![0];
    cfg.strategies = vec![medaug::exp::StrategyKind::None];
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&cfg, dir.path(), 1).unwrap();
    let runs = String::from_utf8(read(dir.path(), "runs.jsonl")).unwrap();
    let hash = cfg.hash();
    std::fs::write(dir.path().join("runs.jsonl"), runs.replace(&hash, "deadbeef")).unwrap();
    assert!(regenerate_report(dir.path()).is_err());
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_medaug"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn cli_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let ok = |o: std::process::Output| {
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        o
    };
    ok(cli(&["corpus", "gen", "--out-dir", &p("data"), "--num-docs", "300", "--positive-fraction", "0.3"]));
    ok(cli(&[
        "lm", "train", "--train", &p("data/train.jsonl"), "--out", &p("lm.ckpt"), "--d-model", "16", "--layers", "1",
        "--context", "48", "--epochs", "1", "--balanced",
    ]));
    let out = ok(cli(&["lm", "sample", "--model", &p("lm.ckpt"), "--n", "3", "--max-len", "12"]));
    assert!(String::from_utf8(out.stdout).unwrap().lines().count() <= 3);
    ok(cli(&[
        "augment", "--model", &p("lm.ckpt"), "--train", &p("data/train.jsonl"), "--count", "10", "--max-len", "24", "--out",
        &p("combined.jsonl"), "--report", &p("aug.json"),
    ]));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(p("aug.json")).unwrap()).unwrap();
    assert_eq!(report["requested"], 10);
    ok(cli(&[
        "distill", "--train", &p("data/train.jsonl"), "--combined", &p("combined.jsonl"), "--epochs", "2", "--out",
        &p("student.ckpt"), "--teacher-out", &p("teacher.ckpt"),
    ]));
    let out = ok(cli(&["eval", "--model", &p("student.ckpt"), "--data", &p("data/test.jsonl"), "--roc-csv", &p("roc.csv")]));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(metrics["auroc"].as_f64().unwrap() > 0.5);
    assert!(Path::new(&p("roc.csv")).exists());

    let bad = cli(&["eval", "--model", &p("student.ckpt"), "--data", &p("combined.jsonl")]);
    assert!(!bad.status.success());

    let ini = dir.path().join("tiny.ini");
    std::fs::write(&ini, SMALL.replace("seeds = 0, 1", "seeds = 0")).unwrap();
    ok(cli(&["experiment", "run", "--config", ini.to_str().unwrap(), "--out", &p("run")]));
    let csv = std::fs::read(p("run/results.csv")).unwrap();
    std::fs::remove_file(p("run/results.csv")).unwrap();
    ok(cli(&["report", "--run-dir", &p("run")]));
    assert_eq!(std::fs::read(p("run/results.csv")).unwrap(), csv);
}
