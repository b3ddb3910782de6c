//! Black-box tests of the `alrelu` binary: exit codes, output files and
//! stdout/stderr behavior.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_alrelu"))
}

fn write_config(dir: &Path, name: &str, value: serde_json::Value) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_vec_pretty(&value).unwrap()).unwrap();
    path
}

fn blobs_config() -> serde_json::Value {
    serde_json::json!({
        "dataset": {"kind": "blobs", "n_per_class": 20, "n_classes": 2, "dim": 2,
                     "separation": 8.0, "seed": 4},
        "model": "shallow_dense",
        "activations": ["relu", "alrelu"],
        "k": 2,
        "repeats": 1,
        "train": {"epochs": 2, "batch_size": 16, "learning_rate": 0.001},
        "seed": 31
    })
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn run_writes_outputs_and_reruns_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "config.json", blobs_config());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");

    let first = bin()
        .args(["run"])
        .arg(&config)
        .arg("--output-dir")
        .arg(&out_a)
        .arg("--quiet")
        .output()
        .unwrap();
    assert!(first.status.success(), "stderr: {}", stderr(&first));
    // --quiet silences progress entirely
    assert_eq!(stderr(&first), "", "progress leaked despite --quiet");
    let table_text = stdout(&first);
    for needle in ["Accuracy", "Weighted F1", "relu", "alrelu", "\u{00b1}"] {
        assert!(table_text.contains(needle), "stdout missing {needle:?}:\n{table_text}");
    }

    let second = bin()
        .args(["run"])
        .arg(&config)
        .arg("--output-dir")
        .arg(&out_b)
        .output()
        .unwrap();
    assert!(second.status.success(), "stderr: {}", stderr(&second));
    assert!(!stderr(&second).is_empty(), "expected progress without --quiet");

    let summary_a = std::fs::read(out_a.join("summary.json")).unwrap();
    let summary_b = std::fs::read(out_b.join("summary.json")).unwrap();
    assert_eq!(summary_a, summary_b, "summary.json not byte-identical across reruns");

    let table = std::fs::read_to_string(out_a.join("table.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "dataset,metric,relu,alrelu");
    assert_eq!(lines.len(), 6, "expected 5 metric rows:\n{table}");
    for row in &lines[1..] {
        assert!(row.starts_with("blobs,"), "{row}");
    }

    let summary: serde_json::Value = serde_json::from_slice(&summary_a).unwrap();
    assert_eq!(summary["reports"].as_array().unwrap().len(), 4); // 2 activations x 1 repeat x 2 folds
    assert_eq!(summary["k"], 2);
}

#[test]
fn unknown_activation_exits_2_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = blobs_config();
    cfg["activations"] = serde_json::json!(["relu", "gelu"]);
    let config = write_config(dir.path(), "config.json", cfg);

    let out = bin().arg("run").arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    let msg = stderr(&out);
    assert!(msg.contains("activations[1]") && msg.contains("gelu"), "{msg}");
}

#[test]
fn k_below_two_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = blobs_config();
    cfg["k"] = 1.into();
    let config = write_config(dir.path(), "config.json", cfg);

    let out = bin().arg("run").arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("k"), "{}", stderr(&out));
}

#[test]
fn missing_config_file_exits_2() {
    let out = bin().args(["run", "/nonexistent/config.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
}

#[test]
fn malformed_json_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(&path, b"{ not json").unwrap();
    let out = bin().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
}

#[test]
fn gradcheck_zero_trials_exits_2() {
    let out = bin().args(["gradcheck", "--trials", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("nothing to check"), "{}", stderr(&out));
}

#[test]
fn gradcheck_passes_and_prints_components() {
    let out = bin().args(["gradcheck", "--trials", "100"]).output().unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    for needle in ["relu", "lrelu", "alrelu", "dense_stack", "small_conv"] {
        assert!(text.contains(needle), "stdout missing {needle:?}:\n{text}");
    }
    assert_eq!(text.matches("PASS").count(), 5, "{text}");
    assert_eq!(text.matches("FAIL").count(), 0, "{text}");
}

#[test]
fn stress_writes_expected_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "stress.json",
        serde_json::json!({
            "dataset": {"kind": "stress", "n": 64, "dim": 4, "seed": 9},
            "model": "shallow_dense",
            "activations": ["relu", "alrelu"],
            "k": 2,
            "repeats": 1,
            "train": {"epochs": 3, "batch_size": 16, "learning_rate": 0.001},
            "seed": 17
        }),
    );
    let out_dir = dir.path().join("out");

    let out = bin()
        .arg("stress")
        .arg(&config)
        .arg("--output-dir")
        .arg(&out_dir)
        .arg("--quiet")
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let csv = std::fs::read_to_string(out_dir.join("stress.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,activation,dead_units");
    assert_eq!(lines.len(), 1 + 3 * 2, "3 epochs x 2 activations:\n{csv}");

    let mut relu_epoch1 = None;
    let mut alrelu_counts = Vec::new();
    for row in &lines[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 3, "{row}");
        let epoch: usize = cols[0].parse().unwrap();
        assert!(epoch >= 1);
        let count: usize = cols[2].parse().unwrap();
        match cols[1] {
            "relu" if epoch == 1 => relu_epoch1 = Some(count),
            "alrelu" => alrelu_counts.push(count),
            _ => {}
        }
    }
    assert!(relu_epoch1.unwrap() > 0, "hostile init left every relu unit alive");
    assert!(alrelu_counts.iter().all(|&c| c == 0), "{alrelu_counts:?}");
}

#[test]
fn no_subcommand_exits_2() {
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
