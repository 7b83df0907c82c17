use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn mechlearn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mechlearn"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .env_remove("MECHLEARN_MNIST_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    files
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let idx = rdr.headers().unwrap().iter().position(|h| h == name).expect("column present");
    rdr.records().map(|r| r.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn generate_writes_four_splits_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&mechlearn(a.path(), &["generate", "--experiment", "synth-classification"]));
    ok(&mechlearn(b.path(), &["generate", "--experiment", "synth-classification"]));
    let files = csv_files(a.path());
    assert_eq!(files.len(), 4);
    let mut rows: Vec<usize> = files.iter().map(|f| data_rows(f)).collect();
    rows.sort_unstable();
    assert_eq!(rows, [1000, 1000, 5000, 5000]);
    for f in &files {
        let other = b.path().join(f.file_name().unwrap());
        assert_eq!(fs::read(f).unwrap(), fs::read(other).unwrap(), "{}", f.display());
        assert_eq!(fs::read_to_string(f).unwrap().lines().next(), Some("x_0,x_1,y,z_0"));
    }
}

#[test]
fn generate_writes_the_confounder_only_on_request() {
    let dir = tempfile::tempdir().unwrap();
    ok(&mechlearn(dir.path(), &["generate", "--experiment", "synth-regression", "--n-train", "50", "--n-test", "20", "--u-debug"]));
    for f in csv_files(dir.path()) {
        assert!(column(&f, "u_debug").iter().all(|u| u.is_finite()));
    }
}

#[test]
fn generate_rejects_empty_sizes_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = mechlearn(dir.path(), &["generate", "--experiment", "synth-regression", "--n-train", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sizes.train"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

fn write_csv(path: &Path, header: &str, rows: impl Iterator<Item = String>) {
    let mut text = format!("{header}\n");
    for r in rows {
        writeln!(text, "{r}").unwrap();
    }
    fs::write(path, text).unwrap();
}

#[test]
fn deconfound_class_balanced_counts_are_exact() {
    let dir = tempfile::tempdir().unwrap();
    let gen = ok(&mechlearn(
        dir.path(),
        &["generate", "--experiment", "synth-classification", "--n-train", "800", "--n-test", "10", "--format", "json"],
    ));
    let report: Value = serde_json::from_str(&gen).unwrap();
    let train = report["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap().to_string())
        .find(|p| p.contains("train") && !p.contains("non_confounded"))
        .unwrap();
    let output = dir.path().join("balanced.csv");
    ok(&mechlearn(
        dir.path(),
        &[
            "deconfound",
            "--input",
            &train,
            "--output",
            output.to_str().unwrap(),
            "--policy",
            "class-balanced",
            "--targets",
            "1:500,2:500",
        ],
    ));
    let y = column(&output, "y");
    assert_eq!(y.len(), 1000);
    assert_eq!(y.iter().filter(|&&v| v == 1.0).count(), 500);
    assert_eq!(y.iter().filter(|&&v| v == 2.0).count(), 500);
    let diag: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("balanced.diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["m"], 1000);
    assert_eq!(diag["estimator"], "per_class_kde");
}

#[test]
fn deconfound_with_independent_mechanism_is_a_plain_bootstrap() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("independent.csv");
    let n = 100;
    write_csv(
        &input,
        "x_0,y,z_0",
        (0..n).map(|i| format!("{},{},{}", i as f64 * 0.5, 1 + i % 2, (i / 2) % 5)),
    );
    let output = dir.path().join("out.csv");
    let m = 10_000;
    ok(&mechlearn(
        dir.path(),
        &[
            "--seed",
            "3",
            "deconfound",
            "--input",
            input.to_str().unwrap(),
            "--output",
            output.to_str().unwrap(),
            "--mechanism-kind",
            "discrete",
            "--policy",
            "uniform-labels",
            "--size",
            &m.to_string(),
        ],
    ));
    let mut counts = vec![0.0; n];
    for p in column(&output, "provenance") {
        counts[p as usize] += 1.0;
    }
    let expected = m as f64 / n as f64;
    let stat: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    // 99 degrees of freedom: the 0.99 quantile is about 134.6
    assert!(stat < 134.6, "chi-square {stat}");
}

#[test]
fn deconfound_names_a_missing_mechanism_column() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    write_csv(&input, "x_0,y,z_0", (0..10).map(|i| format!("{i},{},{i}", 1 + i % 2)));
    let out = mechlearn(
        dir.path(),
        &["deconfound", "--input", input.to_str().unwrap(), "--mechanism", "mediator"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mediator"));
}

#[test]
fn train_eval_knn_resubstitution_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    write_csv(
        &data,
        "x_0,x_1,y,z_0",
        (0..60).map(|i| format!("{},{},{},0.0", i as f64 * 0.1, (i * 7 % 13) as f64, 1 + (i * 5 % 3) % 2)),
    );
    let stdout = ok(&mechlearn(
        dir.path(),
        &[
            "--format",
            "json",
            "train-eval",
            "--train",
            data.to_str().unwrap(),
            "--test",
            data.to_str().unwrap(),
            "--model",
            "knn",
            "--k",
            "1",
        ],
    ));
    let results: Value = serde_json::from_str(&stdout).unwrap();
    let r = &results["train.csv"];
    assert_eq!(r["value"], 1.0);
    assert_eq!(r["metric"], "accuracy");
    let saved: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("train_eval.json")).unwrap()).unwrap();
    assert_eq!(saved, results);
}

#[test]
fn train_eval_ols_fits_noiseless_data_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let line = |i: usize| {
        let (a, b) = (i as f64 * 0.25, ((i * 3) % 7) as f64);
        format!("{a},{b},{},0.0", 1.5 - 2.0 * a + 0.5 * b)
    };
    let train = dir.path().join("train.csv");
    let test = dir.path().join("test.csv");
    write_csv(&train, "x_0,x_1,y,z_0", (0..40).map(line));
    write_csv(&test, "x_0,x_1,y,z_0", (40..60).map(line));
    let stdout = ok(&mechlearn(
        dir.path(),
        &[
            "--format",
            "json",
            "train-eval",
            "--train",
            train.to_str().unwrap(),
            "--test",
            test.to_str().unwrap(),
            "--model",
            "ols",
        ],
    ));
    let results: Value = serde_json::from_str(&stdout).unwrap();
    let r = results["test.csv"].as_object().unwrap();
    let mut keys: Vec<&str> = r.keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["config_hash", "metric", "n_test", "seed", "value"]);
    assert_eq!(r["metric"], "rmse");
    assert_eq!(r["n_test"], 20);
    assert!(r["value"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn reproduce_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    fs::write(
        &config,
        "experiment = \"synth_regression\"\nrepeats = 2\n\n[sizes]\ntrain = 300\ntest = 100\n\n[seeds]\nbase = 42\n",
    )
    .unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let stdout = ok(&mechlearn(&out, &["--config", config.to_str().unwrap(), "--format", "json", "reproduce"]));
        (stdout, fs::read(out.join("synth_regression/results.json")).unwrap())
    };
    let (a_stdout, a_file) = run("a");
    let (b_stdout, b_file) = run("b");
    assert_eq!(a_file, b_file);
    assert_eq!(a_stdout, b_stdout);
    let table: Value = serde_json::from_str(&a_stdout).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 4);
    assert_eq!(table["metadata"]["repeats"], 2);
    assert!(dir.path().join("a/synth_regression/plots").is_dir());
}

#[test]
fn reproduce_background_mnist_names_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("no-mnist");
    fs::create_dir(&empty).unwrap();
    let out = mechlearn(
        dir.path(),
        &["reproduce", "--experiment", "background-mnist", "--mnist-dir", empty.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train-images-idx3-ubyte"), "{err}");
    assert!(err.contains("t10k-labels-idx1-ubyte"), "{err}");
}
