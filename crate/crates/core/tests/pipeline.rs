use std::fs;
use std::path::Path;

use ids_core::pipeline::{cmd_eval, cmd_predict, cmd_prep, cmd_synth, cmd_train, load_dataset, sidecar};
use ids_core::synth::SynthSpec;
use ids_core::{IdsError, LeakageMode, ModelFile, PipelineConfig};

fn synth(dir: &Path, rows: usize) -> std::path::PathBuf {
    let path = dir.join("data.csv");
    let mut spec = SynthSpec::new(vec![5.0, 2.0, 1.0], rows, 6, 11);
    spec.separation = 8.0;
    cmd_synth(&spec, &path).unwrap();
    path
}

fn small_cfg(extra: &str) -> PipelineConfig {
    PipelineConfig::parse(&format!("pca.k = 4\nmodel.n_trees = 15\ncv.k = 3\n{extra}")).unwrap()
}

#[test]
fn prep_cleans_and_writes_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("raw.csv");
    fs::write(
        &input,
        "a,b,label\n1,2,c0\n1,2,c0\nNaN,3,c1\n4,inf,c1\n5,6,c1\n7,8,c0\n",
    )
    .unwrap();
    let out = tmp.path().join("clean.csv");
    let rep = cmd_prep(&small_cfg(""), &input, &out).unwrap();
    assert_eq!(rep.rows_out, 3);
    assert_eq!(rep.provenance.rows_in, 6);
    assert_eq!(rep.provenance.rows_dropped_nan_inf, 2);
    assert_eq!(rep.provenance.rows_dropped_duplicate, 1);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(sidecar(&out, "provenance").exists());
}

#[test]
fn directory_input_stacks_files_and_drops_cross_file_duplicates() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("parts");
    fs::create_dir(&dir).unwrap();
    fs::write(dir.join("a.csv"), "x,label\n1,c0\n2,c1\n").unwrap();
    fs::write(dir.join("b.csv"), "x,label\n2,c1\n3,c0\n").unwrap();
    fs::write(dir.join("notes.txt"), "ignored").unwrap();
    let (table, _) = load_dataset(&small_cfg(""), &dir).unwrap();
    assert_eq!(table.row_count(), 3);
    assert_eq!(table.provenance.rows_in, 4);
    assert_eq!(table.provenance.rows_dropped_duplicate, 1);

    fs::write(dir.join("c.csv"), "y,label\n9,c0\n").unwrap();
    let err = load_dataset(&small_cfg(""), &dir).unwrap_err();
    assert!(matches!(err, IdsError::ColumnMismatch { .. }), "{err}");
}

#[test]
fn train_then_predict_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 400);
    let out = cmd_train(&small_cfg("sfe.embed_mode = \"soft\"\n"), &data, tmp.path()).unwrap();
    let model = ModelFile::load(&out.model_path).unwrap();
    assert_eq!(model.classes, ["c0", "c1", "c2"]);

    let pred = tmp.path().join("pred.csv");
    let res = cmd_predict(&out.model_path, &out.chain_path, &data, &pred).unwrap();
    assert_eq!(res.rows_predicted, 400);
    assert!(res.rows_skipped.is_empty());

    let truth: Vec<String> = fs::read_to_string(&data)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().to_string())
        .collect();
    let mut rdr = csv::Reader::from_path(&pred).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["row", "predicted", "p_c0", "p_c1", "p_c2"]);
    let mut correct = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let row: usize = rec[0].parse().unwrap();
        correct += usize::from(rec[1] == truth[row]);
        let total: f64 = (2..5).map(|j| rec[j].parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
    assert!(correct as f64 / 400.0 > 0.95, "{correct}");
}

#[test]
fn predict_rejects_column_mismatch_before_computing() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 200);
    let out = cmd_train(&small_cfg(""), &data, tmp.path()).unwrap();
    let text = fs::read_to_string(&data).unwrap();

    let renamed = tmp.path().join("renamed.csv");
    fs::write(&renamed, text.replacen("f3", "zz", 1)).unwrap();
    let pred = tmp.path().join("pred.csv");
    match cmd_predict(&out.model_path, &out.chain_path, &renamed, &pred) {
        Err(IdsError::ColumnMismatch { missing, extra }) => {
            assert_eq!(missing, ["f3"]);
            assert_eq!(extra, ["zz"]);
        }
        other => panic!("expected a column mismatch, got {other:?}"),
    }
    assert!(!pred.exists());

    // the label column may be absent at prediction time
    let unlabeled = tmp.path().join("unlabeled.csv");
    let stripped: String = text
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
        .collect();
    fs::write(&unlabeled, stripped).unwrap();
    cmd_predict(&out.model_path, &out.chain_path, &unlabeled, &pred).unwrap();
}

#[test]
fn predict_skips_non_finite_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 200);
    let out = cmd_train(&small_cfg(""), &data, tmp.path()).unwrap();
    let mut lines: Vec<String> = fs::read_to_string(&data).unwrap().lines().map(String::from).collect();
    let cells: Vec<&str> = lines[3].split(',').collect();
    lines[3] = std::iter::once("NaN").chain(cells[1..].iter().copied()).collect::<Vec<_>>().join(",");
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, lines.join("\n")).unwrap();
    let res = cmd_predict(&out.model_path, &out.chain_path, &bad, &tmp.path().join("p.csv")).unwrap();
    assert_eq!(res.rows_skipped, [2]);
    assert_eq!(res.rows_predicted, 199);
}

#[test]
fn faithful_audit_reports_leakage_and_strict_has_none() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 300);
    let report = tmp.path().join("r.json");

    let faithful = cmd_eval(&small_cfg(""), &data, &report).unwrap();
    assert_eq!(faithful.audit.mode, LeakageMode::Faithful);
    assert!(faithful.audit.rows_evaluated > 300);
    assert!(faithful.audit.appended_rows_in_test > 0);
    assert!(faithful.audit.test_rows_sharing_origin_with_train > 0);
    assert!(sidecar(&report, "timings").exists());

    let strict = cmd_eval(&small_cfg("leakage = \"strict\"\n"), &data, &report).unwrap();
    assert_eq!(strict.audit.rows_evaluated, 300);
    assert_eq!(strict.audit.appended_rows_in_test, 0);
    assert_eq!(strict.audit.test_rows_sharing_origin_with_train, 0);
    assert_eq!(strict.fold_sizes.iter().sum::<usize>(), 300);
}

#[test]
fn eval_report_is_self_describing() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 240);
    let report = tmp.path().join("r.json");
    let rep = cmd_eval(&small_cfg("model.kind = \"dt,gbt\"\nmodel.gbt.n_rounds = 5\n"), &data, &report).unwrap();
    assert_eq!(rep.models.len(), 2);
    assert_eq!(rep.metadata.classes, ["c0", "c1", "c2"]);
    assert_eq!(rep.metadata.pca_k, Some(4));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["format"], "ids-eval-report");
    for m in &rep.models {
        assert_eq!(m.folds.len(), 3);
        let cm = &m.aggregate.confusion_matrix;
        assert_eq!(cm.total(), rep.audit.rows_evaluated as u64);
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let err = PipelineConfig::parse("pca.kk = 3\n").unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
