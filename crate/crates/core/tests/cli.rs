use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn clamp_rbm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clamp-rbm"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = clamp_rbm(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, patients: &str, genes: &str) {
    ok(
        dir,
        &["synth", "--n-patients", patients, "--n-genes", genes, "--n-informative", "3", "--separation", "4", "--seed", "3"],
    );
}

const SMALL_SWEEP: [&str; 16] = [
    "--matrix", "matrix.csv", "--labels", "labels.csv", "--top-k", "3", "--sizes", "16,4,6",
    "--sampler", "exact", "--n-replicas", "40", "--epochs", "2", "--seed", "8",
];

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), "10", "20");
    synth(b.path(), "10", "20");
    for f in ["matrix.csv", "labels.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
    let matrix = fs::read_to_string(a.path().join("matrix.csv")).unwrap();
    assert_eq!(matrix.lines().count(), 11);
    assert_eq!(matrix.lines().next().unwrap().split(',').count(), 21);
}

#[test]
fn features_selects_top_k_and_writes_sorted_scores() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "24", "40");
    let stdout = ok(
        d,
        &["features", "--matrix", "matrix.csv", "--labels", "labels.csv", "--k", "10", "--out-labels", "reduced_labels.csv"],
    );
    assert!(stdout.starts_with("selected 10 of 40 genes"), "{stdout}");
    let reduced = fs::read_to_string(d.join("reduced.csv")).unwrap();
    assert_eq!(reduced.lines().next().unwrap().split(',').count(), 11);
    assert_eq!(
        fs::read(d.join("reduced_labels.csv")).unwrap(),
        fs::read(d.join("labels.csv")).unwrap()
    );

    let scores = fs::read_to_string(d.join("scores.csv")).unwrap();
    let values: Vec<f64> = scores
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 40);
    assert!(values.windows(2).all(|w| w[0] >= w[1]));

    ok(
        d,
        &["features", "--matrix", "matrix.csv", "--labels", "labels.csv", "--k", "40", "--out-matrix", "all.csv"],
    );
    let out = clamp_rbm(d, &["features", "--matrix", "matrix.csv", "--labels", "labels.csv", "--k", "41"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[invalid-input]"));
}

#[test]
fn single_point_sweep_has_three_records() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "26", "12");
    let mut args = vec!["sweep", "--lr", "0.5", "--hidden", "2", "--samples", "4"];
    args.extend(SMALL_SWEEP);
    let stdout = ok(d, &args);
    assert!(stdout.contains("planned runs: 3 (1 grid points x 3 repetitions)"), "{stdout}");
    let csv = fs::read_to_string(d.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "lr,n_hidden,n_samples,rep,val_error,raw_score");
    assert_eq!(lines.len(), 4);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(json["n_runs"], 3);
    assert_eq!(json["raw_score_axis"].as_array().unwrap().len(), 7);
}

#[test]
fn sweep_resumes_from_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "26", "12");
    let mut args = vec![
        "sweep", "--lr", "0.5,1", "--hidden", "1", "--samples", "4", "--checkpoint-dir", "ck",
    ];
    args.extend(SMALL_SWEEP);
    ok(d, &args);
    let reference = fs::read_to_string(d.join("sweep.csv")).unwrap();

    let mut files: Vec<_> = fs::read_dir(d.join("ck")).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 2);
    // a marker score in one checkpoint proves it is read back, not recomputed
    let kept = &files[0];
    let mut doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(kept).unwrap()).unwrap();
    doc["records"][0]["raw_score"] = 5.into();
    fs::write(kept, serde_json::to_string(&doc).unwrap()).unwrap();
    fs::remove_file(&files[1]).unwrap();

    let stdout = ok(d, &args);
    assert!(stdout.contains("resumed 1 grid points"), "{stdout}");
    assert!(files[1].exists());
    let resumed = fs::read_to_string(d.join("sweep.csv")).unwrap();
    let marker = doc["records"][0]["learning_rate"].as_f64().unwrap();
    let differing: Vec<(&str, &str)> = reference
        .lines()
        .zip(resumed.lines())
        .filter(|(a, b)| a != b)
        .collect();
    assert_eq!(differing.len(), 1, "{differing:?}");
    assert!(differing[0].1.starts_with(&format!("{marker},")));
    assert!(differing[0].1.ends_with(",5"));

    // different settings ignore old checkpoints
    let mut other = args.clone();
    let i = other.iter().position(|a| *a == "8").unwrap();
    other[i] = "9";
    let stdout = ok(d, &other);
    assert!(!stdout.contains("resumed"), "{stdout}");
}

#[test]
fn train_then_classify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "26", "12");
    let mut args = vec!["train", "--lr", "0.25", "--hidden", "2", "--samples", "4"];
    args.extend(SMALL_SWEEP);
    let stdout = ok(d, &args);
    assert!(stdout.contains("test raw score:"), "{stdout}");
    let model = fs::read_to_string(d.join("model.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&model).unwrap();
    assert_eq!(doc["format"], "clamp-rbm-model");
    assert_eq!(doc["n_input_genes"], 12);
    assert_eq!(doc["feature_indices"].as_array().unwrap().len(), 3);

    let matrix = fs::read_to_string(d.join("matrix.csv")).unwrap();
    let row: Vec<&str> = matrix.lines().nth(1).unwrap().split(',').skip(1).collect();
    fs::write(d.join("patient.txt"), row.join(",")).unwrap();
    let first = ok(d, &["classify", "--model", "model.json", "--vector", "patient.txt"]);
    assert!(first.starts_with("class: "), "{first}");
    assert!(first.contains("clamp probabilities: "));
    assert_eq!(first, ok(d, &["classify", "--model", "model.json", "--vector", "patient.txt"]));

    ok(d, &args);
    assert_eq!(fs::read_to_string(d.join("model.json")).unwrap(), model);

    fs::write(d.join("short.txt"), row[..5].join(" ")).unwrap();
    let out = clamp_rbm(d, &["classify", "--model", "model.json", "--vector", "short.txt"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("has 5 values, model expects 12"), "{stderr}");

    fs::write(d.join("bad.txt"), "1,2,x").unwrap();
    let out = clamp_rbm(d, &["classify", "--model", "model.json", "--vector", "bad.txt"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn report_rebuilds_summary_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("runs.csv"),
        "lr,n_hidden,n_samples,rep,val_error,raw_score\n0.75,3,1024,0,0.2,13\n0.75,3,1024,1,0.1,14\n0.75,3,1024,2,0.3,13\n",
    )
    .unwrap();
    let stdout = ok(d, &["report", "--csv", "runs.csv"]);
    assert!(stdout.lines().any(|l| l == "13\t2"), "{stdout}");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["raw_score_histogram"][0]["frequencies"][13], 2);
    assert_eq!(json["best"]["raw_scores"], serde_json::json!([13, 14, 13]));
}

#[test]
fn error_categories_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = clamp_rbm(d, &["features", "--matrix", "nope.csv", "--labels", "nope.csv"]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[io]"));

    synth(d, "10", "6");
    let out = clamp_rbm(
        d,
        &["sweep", "--matrix", "matrix.csv", "--labels", "labels.csv", "--sizes", "8,1", "--samples", "2"],
    );
    assert_eq!(out.status.code(), Some(2));

    let out = clamp_rbm(
        d,
        &["sweep", "--matrix", "matrix.csv", "--labels", "labels.csv", "--sizes", "6,2,2", "--hidden", "9",
          "--samples", "2", "--sampler", "sa-chimera", "--chimera-rows", "1", "--chimera-cols", "1"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
