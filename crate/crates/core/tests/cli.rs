//! End-to-end checks of the `cagnn` binary and the command functions.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

use cagnn::cli::{cmd_prepare, load_data, MetricRecord, PrepareArgs};
use cagnn::train::{Split, KS};

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cagnn")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = bin(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Synthetic corpus, prepared dataset and a short training run.
fn fixture(dir: &Path) {
    std::fs::write(
        dir.join("synth.toml"),
        "users = 16\npois = 24\ncategories = 4\ntrajectories_per_user = 8\n",
    )
    .unwrap();
    std::fs::write(dir.join("train.toml"), "dim = 8\nepochs = 3\nseed = 11\n").unwrap();
    ok(&["synth", "--spec", "synth.toml", "--seed", "9", "--out", "raw.csv"], dir);
    ok(&["prepare", "--input", "raw.csv", "--out", "data", "--min-poi", "2", "--min-user-traj", "2"], dir);
    ok(&["train", "--data", "data", "--config", "train.toml", "--out", "run"], dir);
}

#[test]
fn prepared_dataset_round_trips_and_stats_match_counts() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["synth", "--seed", "2", "--out", "raw.csv"], p);
    let stats = cmd_prepare(&PrepareArgs {
        min_poi: 2,
        min_user_traj: 2,
        ..PrepareArgs::new(p.join("raw.csv"), p.join("data"))
    })
    .unwrap();
    let data = load_data(&p.join("data")).unwrap();

    let all: Vec<_> = [Split::Train, Split::Val, Split::Test]
        .iter()
        .flat_map(|&s| data.trajectories(s).to_vec())
        .collect();
    let users: BTreeSet<usize> = all.iter().map(|t| t.user).collect();
    let pois: BTreeSet<usize> = all.iter().flat_map(|t| t.events.iter().map(|e| e.poi)).collect();
    let checkins: usize = all.iter().map(|t| t.events.len()).sum();
    assert_eq!(stats.users, users.len());
    assert_eq!(stats.pois, pois.len());
    assert_eq!(stats.checkins, checkins);
    assert!((stats.density - checkins as f64 / (users.len() * pois.len()) as f64).abs() < 1e-15);
    assert_eq!(data.dataset.stats, stats);

    // A second save of the loaded data is byte-identical.
    cagnn::cli::save_data(&data, &p.join("again")).unwrap();
    for f in ["dataset.json", "graph.json", "features.json"] {
        assert_eq!(std::fs::read(p.join("data").join(f)).unwrap(), std::fs::read(p.join("again").join(f)).unwrap());
    }
}

#[test]
fn missing_input_exits_two_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["prepare", "--input", "nowhere.csv", "--out", "data"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.csv"));

    let out = bin(&["eval", "--run", "no_run"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_run"));

    let out = bin(&["train", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_flags_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["synth", "--seed", "1", "--out", "raw.csv"], p);
    for args in [
        vec!["prepare", "--input", "raw.csv", "--out", "d", "--tz", "+99"],
        vec!["prepare", "--input", "raw.csv", "--out", "d", "--bin-km", "0"],
        vec!["prepare", "--input", "raw.csv", "--out", "d", "--train-ratio", "0.9", "--val-ratio", "0.5"],
        vec!["gradcheck", "--dim", "0"],
        vec!["config", "--variant", "nonsense"],
    ] {
        assert_eq!(bin(&args, p).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn train_writes_run_artifacts_and_eval_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fixture(p);
    let run = p.join("run");
    for f in ["best.ckpt", "config.toml", "metrics.json", "loss_curve.csv", "train_log.json", "run.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let records: Vec<MetricRecord> = serde_json::from_slice(&std::fs::read(run.join("metrics.json")).unwrap()).unwrap();
    assert!(records.iter().all(|r| r.seed == 11 && r.config_hash == records[0].config_hash));
    let curve = std::fs::read_to_string(run.join("loss_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 4);

    let eval: Vec<MetricRecord> = serde_json::from_str(&ok(&["eval", "--run", "run", "--split", "train"], p)).unwrap();
    assert_eq!(eval.len(), KS.len());
    let stored: Vec<&MetricRecord> = records.iter().filter(|r| r.split == Split::Train).collect();
    assert_eq!(stored.len(), KS.len());
    for (a, b) in eval.iter().zip(stored) {
        assert_eq!(a, b);
    }
}

#[test]
fn analyze_modes_produce_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fixture(p);

    let hist: serde_json::Value = serde_json::from_str(&ok(&["analyze", "--run", "run", "--mode", "hist"], p)).unwrap();
    let edges = hist["edges"].as_u64().unwrap();
    for v in ["context_adaptive", "standard_gat"] {
        let total: u64 = hist[v].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
        assert_eq!(total, edges, "{v}");
    }
    let dump = std::fs::read_to_string(p.join("run/edges.csv")).unwrap();
    // One row per edge and layer; the fixture uses the default two GAT layers.
    assert_eq!(dump.lines().count() as u64, 2 * edges + 1);
    let mut csv_totals = std::collections::BTreeMap::<String, u64>::new();
    for rec in csv::Reader::from_path(p.join("run/hist.csv")).unwrap().records() {
        let rec = rec.unwrap();
        *csv_totals.entry(rec[3].to_string()).or_default() += rec[2].parse::<u64>().unwrap();
    }
    assert_eq!(csv_totals.len(), 2);
    assert!(csv_totals.values().all(|&t| t == edges));

    let case: serde_json::Value = serde_json::from_str(&ok(&["analyze", "--run", "run", "--mode", "case", "--node", "0"], p)).unwrap();
    let rows = case["neighbors"].as_array().unwrap();
    assert!(!rows.is_empty());
    let sum: f64 = rows.iter().map(|r| r["alpha_context_adaptive"].as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-9);
    assert!(p.join("run/case.csv").is_file());
    assert_eq!(bin(&["analyze", "--run", "run", "--mode", "case"], p).status.code(), Some(2));
    assert_eq!(bin(&["analyze", "--run", "run", "--mode", "case", "--node", "nope"], p).status.code(), Some(2));

    let mi: serde_json::Value =
        serde_json::from_str(&ok(&["analyze", "--run", "run", "--mode", "mi", "--split", "train"], p)).unwrap();
    for key in ["sequence", "sequence_and_graph"] {
        let m = mi[key]["mi"].as_f64().unwrap();
        assert!(m >= 0.0 && m <= mi[key]["label_entropy"].as_f64().unwrap() + 1e-12, "{key}");
    }
    assert!(p.join("run/mi.json").is_file());

    let ablate: serde_json::Value = serde_json::from_str(&ok(&["analyze", "--run", "run", "--mode", "ablate"], p)).unwrap();
    assert_eq!(ablate.as_array().unwrap().len(), 6);
    assert!(p.join("run/ablation.csv").is_file());
}

#[test]
fn config_subcommand_prints_loadable_toml() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let text = ok(&["config", "--variant", "no_mutloss"], p);
    let cfg = cagnn::train::TrainConfig::from_toml(&text).unwrap();
    assert!(cfg.no_mutloss && !cfg.no_contada);
}

#[test]
fn gradcheck_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let out: serde_json::Value = serde_json::from_str(&ok(&["gradcheck", "--seed", "3"], dir.path())).unwrap();
    assert_eq!(out["passed"], serde_json::Value::Bool(true));
    assert!(out["max_rel_error"].as_f64().unwrap() < 1e-4);
}
