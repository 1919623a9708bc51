use std::path::Path;
use std::process::{Command, Output};

use cloze_core::experiment::{write_predictions, Experiment, ExperimentConfig};
use cloze_core::load_dataset;

fn cloze(args: &[&str], output_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cloze"))
        .args(args)
        .env("CLOZE_OUTPUT_ROOT", output_root)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn toy_workspace() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(cloze(
        &["make-toy-data", "--out", data.to_str().unwrap()],
        tmp.path(),
    ));
    tmp
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const ENSEMBLE: &str = r#"{
  "name": "ensemble",
  "train": "train.tsv",
  "dev": "dev.tsv",
  "sources": [
    {"type": "mlm_softmax", "path": "mlm.jsonl"},
    {"type": "ngram", "path": "ngrams.tsv"}
  ],
  "head": {"type": "linear_regression"},
  "zero_ngram_rule": true
}"#;

#[test]
fn train_then_predict_gives_five_rows_per_instance() {
    let tmp = toy_workspace();
    let data = tmp.path().join("data");
    let config = write_config(&data, "ensemble.json", ENSEMBLE);
    ok(cloze(&["train", &config], tmp.path()));
    let model = tmp.path().join("ensemble/model.json");
    assert!(model.is_file());
    let train = data.join("train.tsv");
    ok(cloze(
        &["predict", &config, "--dataset", train.to_str().unwrap()],
        tmp.path(),
    ));
    let text = std::fs::read_to_string(tmp.path().join("ensemble/predictions.tsv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("instance_id\tcandidate_id\tlabel"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5 * 40);
    for chunk in rows.chunks(5) {
        let id = chunk[0].split('\t').next().unwrap();
        let cids: Vec<&str> = chunk
            .iter()
            .map(|r| r.split('\t').nth(1).unwrap())
            .collect();
        assert!(chunk.iter().all(|r| r.starts_with(&format!("{id}\t"))));
        assert_eq!(cids, ["1", "2", "3", "4", "5"]);
    }
}

#[test]
fn disk_round_trip_matches_in_memory_pipeline() {
    let tmp = toy_workspace();
    let data = tmp.path().join("data");
    let config_path = write_config(&data, "ensemble.json", ENSEMBLE);
    let out = tmp.path().join("run");
    ok(cloze(
        &["train", &config_path, "--out", out.to_str().unwrap()],
        tmp.path(),
    ));
    ok(cloze(
        &["predict", &config_path, "--out", out.to_str().unwrap()],
        tmp.path(),
    ));
    let from_disk = std::fs::read_to_string(out.join("predictions.tsv")).unwrap();

    let config = ExperimentConfig::load(Path::new(&config_path)).unwrap();
    let experiment = Experiment::load(config).unwrap();
    let model = experiment.train().unwrap();
    let dev = load_dataset(data.join("dev.tsv"), true).unwrap();
    let in_memory = write_predictions(&experiment.predict(&model, &dev).unwrap());
    assert_eq!(from_disk, in_memory);
    assert_eq!(
        std::fs::read_to_string(out.join("model.json")).unwrap(),
        model.to_json()
    );
}

#[test]
fn evaluate_perfect_predictions_reports_full_accuracy() {
    let tmp = toy_workspace();
    let dev_path = tmp.path().join("data/dev.tsv");
    let dev = load_dataset(&dev_path, true).unwrap();
    let mut tsv = String::from("instance_id\tcandidate_id\tlabel\n");
    for (instance, candidate) in dev.pairs() {
        tsv.push_str(&format!(
            "{}\t{}\t{}\n",
            instance.id,
            candidate.candidate_id,
            candidate.gold_label.unwrap()
        ));
    }
    let preds = tmp.path().join("perfect.tsv");
    std::fs::write(&preds, tsv).unwrap();
    let out = tmp.path().join("eval");
    let stdout = ok(cloze(
        &[
            "evaluate",
            "--predictions",
            preds.to_str().unwrap(),
            "--gold",
            dev_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--name",
            "oracle",
        ],
        tmp.path(),
    ));
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(stdout, report);
    let row = report.lines().find(|l| l.contains("oracle")).unwrap();
    let cells: Vec<&str> = row
        .split('|')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .collect();
    assert_eq!(cells[1], "1.00");
    assert_eq!(&cells[2..5], ["1.00", "1.00", "1.00"]);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["accuracy"], 1.0);
    assert_eq!(json["n"], 100);
}

#[test]
fn grid_over_context_methods_gives_three_rows_and_is_reproducible() {
    let tmp = toy_workspace();
    let grid = tmp.path().join("data/grid_context.json");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let table = ok(cloze(
        &["grid", grid.to_str().unwrap(), "--out", a.to_str().unwrap()],
        tmp.path(),
    ));
    ok(cloze(
        &["grid", grid.to_str().unwrap(), "--out", b.to_str().unwrap()],
        tmp.path(),
    ));
    let rows: Vec<&str> = table
        .lines()
        .filter(|l| l.starts_with("| logistic"))
        .collect();
    assert_eq!(rows.len(), 3, "{table}");
    for (row, method) in rows.iter().zip(["full", "context_only", "sentence_only"]) {
        assert!(
            row.contains(&format!("logistic_embedding_{method} ")),
            "{row}"
        );
    }
    for file in [
        "comparison.txt",
        "comparison.json",
        "00_logistic_embedding_full/model.json",
        "02_logistic_embedding_sentence_only/predictions.tsv",
    ] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn grid_defaults_to_output_root() {
    let tmp = toy_workspace();
    let grid = tmp.path().join("data/grid.json");
    ok(cloze(&["grid", grid.to_str().unwrap()], tmp.path()));
    assert!(tmp.path().join("pinned/comparison.txt").is_file());
}

#[test]
fn flag_overrides_apply() {
    let tmp = toy_workspace();
    let data = tmp.path().join("data");
    let config = write_config(&data, "ensemble.json", ENSEMBLE);
    ok(cloze(
        &[
            "train",
            &config,
            "--context-method",
            "sentence_only",
            "--seed",
            "9",
        ],
        tmp.path(),
    ));
    let model = std::fs::read_to_string(tmp.path().join("ensemble/model.json")).unwrap();
    assert!(model.contains("\"context_method\": \"sentence_only\""));
    let bad = cloze(
        &["train", &config, "--context-method", "paragraph"],
        tmp.path(),
    );
    assert!(!bad.status.success());
}

#[test]
fn invalid_configs_exit_nonzero() {
    let tmp = toy_workspace();
    let data = tmp.path().join("data");
    let incompatible = write_config(
        &data,
        "bad.json",
        r#"{"name":"bad","train":"train.tsv","sources":[{"type":"tfidf"}],"head":{"type":"gaussian_nb"}}"#,
    );
    let out = cloze(&["validate-config", &incompatible], tmp.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot use source `tfidf`"));
    assert!(!cloze(&["train", &incompatible], tmp.path())
        .status
        .success());

    let missing = write_config(
        &data,
        "missing.json",
        r#"{"name":"m","train":"absent.tsv","sources":[{"type":"rtd","path":"rtd.tsv"}],"head":{"type":"gaussian_nb"}}"#,
    );
    let out = cloze(&["validate-config", &missing], tmp.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.tsv"));

    let good = write_config(&data, "ensemble.json", ENSEMBLE);
    assert_eq!(
        ok(cloze(&["validate-config", &good], tmp.path())).trim(),
        "ok"
    );
    let grid = data.join("grid_all.json");
    assert!(ok(cloze(
        &["validate-config", "--grid", grid.to_str().unwrap()],
        tmp.path()
    ))
    .starts_with("ok: 13 entries"));

    let predict_without_model = cloze(
        &[
            "predict",
            &good,
            "--out",
            tmp.path().join("nowhere").to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(!predict_without_model.status.success());
}

#[test]
fn make_toy_data_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(cloze(
        &["make-toy-data", "--out", a.to_str().unwrap()],
        tmp.path(),
    ));
    ok(cloze(
        &["make-toy-data", "--out", b.to_str().unwrap(), "--seed", "0"],
        tmp.path(),
    ));
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/toy");
    for entry in std::fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        let bytes = std::fs::read(a.join(&name)).unwrap();
        assert_eq!(bytes, std::fs::read(b.join(&name)).unwrap());
        assert_eq!(bytes, std::fs::read(fixtures.join(&name)).unwrap());
    }
}
