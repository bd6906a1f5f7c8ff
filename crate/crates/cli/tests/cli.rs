use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ids(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ids"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path) -> std::path::PathBuf {
    let data = dir.join("data.csv");
    let o = ids(&["synth", "--out", s(&data), "--rows", "300", "--dims", "5", "--ratios", "4,2,1", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    data
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, "pca.k = 3\nmodel.n_trees = 10\ncv.k = 3\nmodel.gbt.n_rounds = 5\n").unwrap();
    cfg
}

#[test]
fn eval_report_does_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let cfg = small_config(tmp.path());
    let mut reports = Vec::new();
    for threads in ["1", "4"] {
        let out = tmp.path().join(format!("r{threads}.json"));
        let o = ids(&[
            "--threads", threads, "eval", "--config", s(&cfg), "--input", s(&data), "--out", s(&out), "--model", "all",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert!(stdout.contains("Accuracy") && stdout.contains("XGB"), "{stdout}");
        reports.push(fs::read(&out).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn train_and_predict() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let cfg = small_config(tmp.path());
    let dir = tmp.path().join("model");
    let o = ids(&["train", "--config", s(&cfg), "--input", s(&data), "--out", s(&dir), "--model", "et"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pred = tmp.path().join("pred.csv");
    let o = ids(&[
        "predict",
        "--model-file",
        s(&dir.join("model.json")),
        "--chain",
        s(&dir.join("chain.json")),
        "--input",
        s(&data),
        "--out",
        s(&pred),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&pred).unwrap().lines().count(), 301);

    let renamed = tmp.path().join("renamed.csv");
    fs::write(&renamed, fs::read_to_string(&data).unwrap().replacen("f0", "g0", 1)).unwrap();
    let o = ids(&[
        "predict",
        "--model-file",
        s(&dir.join("model.json")),
        "--chain",
        s(&dir.join("chain.json")),
        "--input",
        s(&renamed),
        "--out",
        s(&pred),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("f0"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let out = tmp.path().join("r.json");

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "no_such_key = 1\n").unwrap();
    let o = ids(&["eval", "--config", s(&bad), "--input", s(&data), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let o = ids(&["eval", "--input", s(&data), "--out", s(&out), "--model", "svm"]);
    assert_eq!(o.status.code(), Some(2));

    let o = ids(&["--threads", "0", "eval", "--input", s(&data), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let o = ids(&["eval", "--input", s(&tmp.path().join("missing.csv")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn prep_reports_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw.csv");
    fs::write(&raw, "a,label\n1,x\n1,x\ninf,y\n2,y\n").unwrap();
    let out = tmp.path().join("clean.csv");
    let o = ids(&["prep", "--input", s(&raw), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("2 rows written"));
    let prov: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("clean.provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["provenance"]["rows_dropped_nan_inf"], 1);
}
