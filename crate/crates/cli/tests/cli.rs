use std::path::Path;
use std::process::{Command, Output};

fn dynprune(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynprune"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn config(name: &str, policy: &str, noise: &str, rate: f64, ratio: f64) -> serde_json::Value {
    serde_json::json!({
        "name": name,
        "dataset": {"kind": "blobs", "n": 300, "n_test": 100, "d": 6, "classes": 4, "cluster_std": 1.0, "seed": 3},
        "noise": {"kind": noise, "rate": rate},
        "reference": {"kind": "held_out_clean", "fraction": 0.1},
        "model": {"kind": "mlp", "hidden": 8},
        "trainer": {"batch_size": 16, "lr": 0.1, "total_epochs": 8},
        "policy": {"policy": policy, "score_source": "das", "r": 0.5},
        "das": {"window": 4},
        "target_prune_ratio": ratio,
        "seeds": [0, 1]
    })
}

fn write_json(path: &Path, value: &serde_json::Value) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write_json(&dir.path().join("c.json"), &config("det", "infobatch", "uniform_symmetric", 0.4, 0.3));
    for out_dir in ["a", "b"] {
        assert_ok(&dynprune(&["run", "--config", "c.json", "--seed", "7", "--out", out_dir], dir.path()));
    }
    let a = std::fs::read(dir.path().join("a/det__seed7.metrics.jsonl")).unwrap();
    let b = std::fs::read(dir.path().join("b/det__seed7.metrics.jsonl")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    // --seed replaces the configured seed list.
    assert!(!dir.path().join("a/det__seed0.metrics.jsonl").exists());
}

#[test]
fn metrics_lines_have_documented_fields() {
    let dir = tempfile::tempdir().unwrap();
    write_json(&dir.path().join("c.json"), &config("fields", "infobatch", "uniform_symmetric", 0.4, 0.5));
    assert_ok(&dynprune(&["run", "--config", "c.json", "--seed", "0", "--out", "o"], dir.path()));
    let text = std::fs::read_to_string(dir.path().join("o/fields__seed0.metrics.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!lines.is_empty());
    for (i, line) in lines.iter().enumerate() {
        assert_eq!(line["epoch"], i + 1);
        for key in ["test_acc_true_labels", "retained_noise_ratio", "pruned_fraction", "consumed_forward_passes"] {
            assert!(line.get(key).is_some(), "missing {key}");
        }
        assert!(line.get("wall_ms").is_none());
        assert_eq!(line["terminal"], i + 1 == lines.len());
    }
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config("bad", "infobatch", "none", 0.0, 0.3);
    cfg["trainer"]["momentum"] = serde_json::json!(0.9);
    write_json(&dir.path().join("c.json"), &cfg);
    let out = dynprune(&["run", "--config", "c.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("momentum"));
}

#[test]
fn sweep_then_reports() {
    let dir = tempfile::tempdir().unwrap();
    let runs = serde_json::json!({
        "runs": [
            config("full", "full", "uniform_symmetric", 0.4, 0.0),
            config("ib", "infobatch", "uniform_symmetric", 0.4, 0.3),
            config("rand", "dynamic_random", "uniform_symmetric", 0.4, 0.3),
        ]
    });
    write_json(&dir.path().join("s.json"), &runs);
    assert_ok(&dynprune(&["sweep", "--config", "s.json", "--out", "sw"], dir.path()));
    let summary = std::fs::read_to_string(dir.path().join("sw/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4, "{summary}");
    assert!(summary.lines().next().unwrap().contains("test_acc_true_labels_mean"));

    assert_ok(&dynprune(&["report", "--input", "sw", "--out", "agg.csv"], dir.path()));
    let agg = std::fs::read_to_string(dir.path().join("agg.csv")).unwrap();
    assert_eq!(agg, summary);

    assert_ok(&dynprune(&["report", "--input", "sw", "--out", "gap.csv", "--gap-table"], dir.path()));
    let gap = std::fs::read_to_string(dir.path().join("gap.csv")).unwrap();
    assert!(gap.lines().any(|l| l.starts_with("infobatch,das,uniform_symmetric")));
    assert_eq!(gap.lines().filter(|l| l.contains("mean_delta")).count(), 2);
}

#[test]
fn gap_table_names_missing_full_cell() {
    let dir = tempfile::tempdir().unwrap();
    let runs = serde_json::json!({ "runs": [config("ib", "infobatch", "pairflip", 0.3, 0.3)] });
    write_json(&dir.path().join("s.json"), &runs);
    assert_ok(&dynprune(&["sweep", "--config", "s.json", "--out", "sw"], dir.path()));
    let out = dynprune(&["report", "--input", "sw", "--out", "gap.csv", "--gap-table"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("pairflip"));
}

#[test]
fn hard_vs_noisy_from_dumps() {
    let dir = tempfile::tempdir().unwrap();
    write_json(&dir.path().join("c.json"), &config("hvn", "infobatch", "uniform_symmetric", 0.4, 0.3));
    assert_ok(&dynprune(
        &["run", "--config", "c.json", "--seed", "0", "--out", "o", "--dump-trajectories", "--dump-das"],
        dir.path(),
    ));
    assert_ok(&dynprune(
        &["report", "--input", "o", "--out", "hvn.csv", "--hard-vs-noisy", "--top-percent", "20"],
        dir.path(),
    ));
    let csv = std::fs::read_to_string(dir.path().join("hvn.csv")).unwrap();
    assert!(csv.starts_with("epoch,group,count,mean_loss,mean_das"));
    assert!(csv.contains(",hard_clean,") && csv.contains(",flipped,"));
}

#[test]
fn hard_vs_noisy_rejects_clean_run() {
    let dir = tempfile::tempdir().unwrap();
    write_json(&dir.path().join("c.json"), &config("clean", "infobatch", "none", 0.0, 0.3));
    assert_ok(&dynprune(
        &["run", "--config", "c.json", "--seed", "0", "--out", "o", "--dump-trajectories", "--dump-das"],
        dir.path(),
    ));
    let out = dynprune(&["report", "--input", "o", "--out", "x.csv", "--hard-vs-noisy"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("flipped"));
}
