use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use xbnet_cli::artifact::ModelArtifact;
use xbnet_cli::commands::{run, ImportanceTable};
use xbnet_cli::report::Clock;
use xbnet_cli::RunSpec;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn xbnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xbnet"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_spec(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn iris_spec(dir: &Path, epochs: usize) -> PathBuf {
    write_spec(
        dir,
        &format!(
            "dataset = {:?}\nlayers = [8, 3]\n[train]\nepochs = {epochs}\n",
            data("iris.csv").display().to_string()
        ),
    )
}

fn train(dir: &Path, epochs: usize) -> PathBuf {
    let spec = iris_spec(dir, epochs);
    let out = dir.join("out");
    let o = xbnet(&[
        "train",
        "--config",
        spec.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--fixed-clock",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn train_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), 3);
    for f in [
        "model.json",
        "report.json",
        "trace.csv",
        "roc.csv",
        "pr.csv",
        "test.csv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(
        trace.lines().next().unwrap(),
        "epoch,train_loss,val_loss,train_acc,val_acc"
    );
    assert_eq!(trace.lines().count(), 4);
    let test_rows = std::fs::read_to_string(out.join("test.csv")).unwrap();
    assert_eq!(test_rows.lines().count(), 31);
}

#[test]
fn artifact_round_trip_is_byte_identical_and_tree_free() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), 2);
    let bytes = std::fs::read_to_string(out.join("model.json")).unwrap();
    let loaded = ModelArtifact::from_json(&bytes).unwrap();
    let again = loaded.to_json().unwrap();
    assert_eq!(again, bytes);
    assert_eq!(ModelArtifact::from_json(&again).unwrap(), loaded);
    let value: serde_json::Value = serde_json::from_str(&bytes).unwrap();
    assert!(value.get("trees").is_none());
    assert!(loaded.trees.is_none());
}

#[test]
fn reloaded_predictions_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = RunSpec::load(&iris_spec(dir.path(), 3)).unwrap();
    let result = run(&spec, Clock { fixed: true }, false).unwrap();
    let reloaded = ModelArtifact::from_json(&result.artifact.to_json().unwrap()).unwrap();
    let raw = xbnet::data::load_csv(&data("iris.csv"), &spec.schema().unwrap()).unwrap();
    let (_, a) = result.artifact.predict(&raw).unwrap();
    let (_, b) = reloaded.predict(&raw).unwrap();
    assert_eq!(a.labels, b.labels);
    let bits = |m: &xbnet::Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.probabilities), bits(&b.probabilities));
}

#[test]
fn eval_reproduces_train_test_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), 5);
    let eval_dir = dir.path().join("eval");
    let o = xbnet(&[
        "eval",
        "--model",
        out.join("model.json").to_str().unwrap(),
        "--data",
        out.join("test.csv").to_str().unwrap(),
        "--out-dir",
        eval_dir.to_str().unwrap(),
        "--fixed-clock",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let train_report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let eval_report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(train_report["test"], eval_report["evaluation"]);
}

#[test]
fn tampered_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), 1);
    let text = std::fs::read_to_string(out.join("model.json")).unwrap();
    let tampered = dir.path().join("tampered.json");
    std::fs::write(
        &tampered,
        text.replacen("\"format_version\": 1", "\"format_version\": 7", 1),
    )
    .unwrap();
    let o = xbnet(&[
        "eval",
        "--model",
        tampered.to_str().unwrap(),
        "--data",
        out.join("test.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("format_version 7"), "{}", stderr(&o));
    assert_eq!(stderr(&o).lines().count(), 1);
}

#[test]
fn renamed_column_lists_missing_and_extra() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), 1);
    let text = std::fs::read_to_string(out.join("test.csv")).unwrap();
    let renamed = dir.path().join("renamed.csv");
    std::fs::write(&renamed, text.replacen("petal_width_cm", "petal_w", 1)).unwrap();
    let o = xbnet(&[
        "eval",
        "--model",
        out.join("model.json").to_str().unwrap(),
        "--data",
        renamed.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains("petal_width_cm") && err.contains("petal_w]"),
        "{err}"
    );
}

#[test]
fn missing_dataset_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "dataset = \"nowhere.csv\"\nlabel = \"y\"\nlayers = [4, 1]\n",
    );
    let o = xbnet(&["train", "--config", spec.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.csv"));
}

#[test]
fn wrong_head_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        &format!(
            "dataset = {:?}\nlayers = [8, 1]\n",
            data("iris.csv").display().to_string()
        ),
    );
    let o = xbnet(&[
        "train",
        "--config",
        spec.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn zero_epochs_flags_untrained() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["trained"], false);
    assert!(out.join("model.json").exists());
}

#[test]
fn importance_from_artifact_and_stripped_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), 2);
    let model = out.join("model.json");
    let o = xbnet(&["importance", "--model", model.to_str().unwrap()]);
    assert!(o.status.success());
    let csv = String::from_utf8(o.stdout).unwrap();
    let input: f64 = csv
        .lines()
        .filter(|l| l.starts_with("input,"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((input - 1.0).abs() < 1e-9);
    assert!(csv.lines().any(|l| l.starts_with("layer0,")));

    let stripped = ModelArtifact::load(&model).unwrap().inference_only();
    assert_eq!(
        ImportanceTable::from_artifact(&stripped),
        ImportanceTable::Absent
    );
    let path = dir.path().join("stripped.json");
    stripped.save(&path).unwrap();
    let o = xbnet(&["importance", "--model", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("train-time data absent"));
}

#[test]
fn informative_feature_tops_input_importance() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("noise_a,signal,noise_b,label\n");
    for s in 0..80u32 {
        let label = s % 2;
        let signal = f64::from(label) * 3.0 + f64::from((s * 7) % 5) * 0.2;
        csv.push_str(&format!(
            "{},{signal},{},{}\n",
            (s * 37) % 11,
            (s * 53) % 7,
            ["no", "yes"][label as usize]
        ));
    }
    std::fs::write(dir.path().join("synthetic.csv"), csv).unwrap();
    let spec = write_spec(
        dir.path(),
        "dataset = \"synthetic.csv\"\nlabel = \"label\"\nlayers = [4, 1]\n[train]\nepochs = 1\n",
    );
    let o = xbnet(&["importance", "--config", spec.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let top = stdout
        .lines()
        .filter(|l| l.starts_with("input,"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[2].to_string(), f[3].parse::<f64>().unwrap())
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert_eq!(top.0, "signal");
}

#[test]
fn empty_suite_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.toml");
    std::fs::write(&suite, "").unwrap();
    let out = dir.path().join("bench");
    let o = xbnet(&[
        "benchmark",
        "--config",
        suite.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--fixed-clock",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["datasets"].as_array().unwrap().len(), 0);
    assert_eq!(report["passed"], true);
}

#[test]
fn absent_dataset_is_marked_and_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.toml");
    std::fs::write(
        &suite,
        "[[dataset]]\nname = \"ghost\"\npath = \"ghost.csv\"\nlayers = [4, 1]\nmin_xbnet_test_accuracy = 0.9\n",
    )
    .unwrap();
    let out = dir.path().join("bench");
    let o = xbnet(&[
        "benchmark",
        "--config",
        suite.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("ghost"));
    let csv = std::fs::read_to_string(out.join("benchmark.csv")).unwrap();
    assert!(csv.contains("ghost,absent"));
}

#[test]
fn failed_bound_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.toml");
    std::fs::write(
        &suite,
        format!(
            "[train]\nepochs = 1\n[train.tree]\nn_estimators = 5\n[[dataset]]\nname = \"iris\"\npath = {:?}\nlayers = [4, 3]\nmin_xbnet_test_accuracy = 1.01\n",
            data("iris.csv").display().to_string()
        ),
    )
    .unwrap();
    let out = dir.path().join("bench");
    let o = xbnet(&[
        "benchmark",
        "--config",
        suite.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("iris/xbnet_test_accuracy"));
}
