mod common;

use std::path::Path;

use common::{memelens, metric, ok, snapshot, stderr, synthetic, Server};
use serde_json::{json, Value};

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_is_reproducible_and_evaluate_matches_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic(dir.path(), 200, 1);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));

    let printed = ok(&["--config", s(&config), "--model-dir", s(&a), "train", "gbdt"]);
    ok(&["--config", s(&config), "--model-dir", s(&b), "train", "gbdt"]);
    assert_eq!(snapshot(&a), snapshot(&b));
    assert_eq!(printed, std::fs::read_to_string(a.join("report.txt")).unwrap());

    let json_out = dir.path().join("eval.json");
    let evaluated = ok(&[
        "--config",
        s(&config),
        "--model-dir",
        s(&a),
        "evaluate",
        "--split",
        "validation",
        "--output",
        s(&json_out),
    ]);
    assert_eq!(evaluated, printed);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    let again: Value = serde_json::from_str(&std::fs::read_to_string(&json_out).unwrap()).unwrap();
    assert_eq!(report, again);
    assert_eq!(report["model"], "gbdt");
    assert_eq!(report["split"], "validation");

    let test = ok(&[
        "--config",
        s(&config),
        "--model-dir",
        s(&a),
        "evaluate",
        "--split",
        "test",
    ]);
    assert!(test.contains("split test\n"));
    assert!(metric(&test, "auroc") >= 0.85, "{test}");
}

#[test]
fn lstm_training_is_reproducible_and_keeps_its_history() {
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic(dir.path(), 120, 2);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["--config", s(&config), "--model-dir", s(&a), "train", "lstm"]);
    ok(&["--config", s(&config), "--model-dir", s(&b), "train", "lstm"]);
    assert_eq!(snapshot(&a), snapshot(&b));

    let model = std::fs::read_to_string(a.join("lstm.model")).unwrap();
    let history = model.lines().find(|l| l.starts_with("history ")).unwrap();
    let fields: Vec<&str> = history.split_whitespace().collect();
    assert_eq!(fields[1], "45");
    assert_eq!(fields.len(), 2 + 45);

    let evaluated = ok(&["--config", s(&config), "--model-dir", s(&a), "evaluate"]);
    assert_eq!(evaluated, std::fs::read_to_string(a.join("report.txt")).unwrap());
}

#[test]
fn missing_inputs_exit_with_data_errors_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path(), 60, 0);
    let missing = dir.path().join("nowhere.jsonl");
    let out = memelens(&[
        "--memes",
        s(&dir.path().join("memes.jsonl")),
        "--annotations",
        s(&missing),
        "train",
        "gbdt",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains(s(&missing)), "{}", stderr(&out));

    let out = memelens(&["train", "gbdt"]);
    assert_eq!(out.status.code(), Some(1), "no memes configured is a usage error");

    let out = memelens(&[
        "--model-dir",
        s(&dir.path().join("none")),
        "--config",
        s(&dir.path().join("memelens.toml")),
        "evaluate",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("not a model directory"));
}

#[test]
fn invalid_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic(dir.path(), 60, 0);
    let memes = dir.path().join("memes.jsonl");
    let text = std::fs::read_to_string(&memes).unwrap();
    std::fs::write(&memes, text.replacen("\"label\":0", "\"label\":3", 1)).unwrap();
    let out = memelens(&["--config", s(&config), "train", "gbdt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("memes.jsonl:"), "{}", stderr(&out));
}

#[test]
fn corrupted_models_are_rejected_with_format_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic(dir.path(), 80, 0);
    let model_dir = dir.path().join("model");
    ok(&["--config", s(&config), "train", "gbdt"]);
    let evaluate = || memelens(&["--config", s(&config), "evaluate"]);

    let model_file = model_dir.join("gbdt.model");
    let original = std::fs::read_to_string(&model_file).unwrap();
    std::fs::write(&model_file, &original[..original.len() / 2]).unwrap();
    let out = evaluate();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("format"), "{}", stderr(&out));

    let first_line = original.lines().next().unwrap();
    std::fs::write(&model_file, original.replacen(first_line, "memelens-gbdt v99", 1)).unwrap();
    let out = evaluate();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("version"), "{}", stderr(&out));
    std::fs::write(&model_file, &original).unwrap();

    let manifest_path = model_dir.join("manifest.json");
    let manifest = std::fs::read_to_string(&manifest_path).unwrap();
    let mut value: Value = serde_json::from_str(&manifest).unwrap();
    value["input_dim"] = json!(7);
    std::fs::write(&manifest_path, value.to_string()).unwrap();
    let out = evaluate();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("dimension"), "{}", stderr(&out));
    std::fs::write(&manifest_path, &manifest).unwrap();
    ok(&["--config", s(&config), "evaluate"]);
}

#[test]
fn augment_exports_flagged_memes() {
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic(dir.path(), 100, 5);
    ok(&["--config", s(&config), "train", "gbdt"]);

    let all = dir.path().join("all.jsonl");
    let printed = ok(&[
        "--config",
        s(&config),
        "--threshold",
        "0",
        "augment",
        "--output",
        s(&all),
    ]);
    assert!(printed.contains("flagged 100 of 100"), "{printed}");
    let records: Vec<Value> = std::fs::read_to_string(&all)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 100);
    let scores: Vec<f64> = records.iter().map(|r| r["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert!(records.iter().all(|r| r["top_features"].as_array().unwrap().len() <= 8));

    let flagged = dir.path().join("flagged.jsonl");
    ok(&[
        "--config",
        s(&config),
        "--top-k",
        "3",
        "augment",
        "--output",
        s(&flagged),
    ]);
    let text = std::fs::read_to_string(&flagged).unwrap();
    let n = text.lines().count();
    assert!(n > 0 && n < 100);
    for line in text.lines() {
        let record: Value = serde_json::from_str(line).unwrap();
        assert!(record["score"].as_f64().unwrap() >= 0.5);
        assert!(record["top_features"].as_array().unwrap().len() <= 3);
    }

    let lstm = dir.path().join("lstm");
    ok(&["--config", s(&config), "--model-dir", s(&lstm), "train", "lstm"]);
    let out = memelens(&[
        "--config",
        s(&config),
        "--model-dir",
        s(&lstm),
        "augment",
        "--output",
        s(&flagged),
    ]);
    assert_ne!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("unsupported for lstm"), "{}", stderr(&out));
}

#[test]
fn cross_validation_and_split_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic(dir.path(), 150, 3);
    let out_json = dir.path().join("cv.json");
    let printed = ok(&["--config", s(&config), "cv", "--folds", "3", "--output", s(&out_json)]);
    assert_eq!(metric(&printed, "folds"), 3.0);
    assert!(metric(&printed, "mean.auroc") >= 0.9, "{printed}");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out_json).unwrap()).unwrap();
    assert_eq!(report["folds"].as_array().unwrap().len(), 3);

    let out = memelens(&["--config", s(&config), "cv", "--folds", "1"]);
    assert_eq!(out.status.code(), Some(1));

    let split_file = dir.path().join("split.jsonl");
    let printed = ok(&["--config", s(&config), "split", "--out", s(&split_file)]);
    // lines read "<split> <count> hateful <positives>"
    let count = |name: &str| -> f64 {
        let line = printed.lines().find(|l| l.starts_with(&format!("{name} "))).unwrap();
        line.split_whitespace().nth(1).unwrap().parse().unwrap()
    };
    assert_eq!(
        count("train") + count("validation") + count("test") + count("unassigned"),
        150.0
    );
    let memes = std::fs::read_to_string(&split_file).unwrap();
    assert_eq!(
        memes.lines().filter(|l| l.contains("\"split\":\"test\"")).count() as f64,
        count("test")
    );
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(memelens(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(memelens(&["train", "svm"]).status.code(), Some(1));
    assert_eq!(memelens(&["--version"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "treshold = 0.5\n").unwrap();
    let out = memelens(&["--config", s(&config), "train", "gbdt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("treshold"));

    let config = synthetic(dir.path(), 60, 0);
    let out = memelens(&["--config", s(&config), "--threshold", "1.5", "train", "gbdt"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn environment_supplies_settings_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic(dir.path(), 60, 0);
    let env_dir = dir.path().join("from-env");
    let out = common::command()
        .args(["--config", s(&config), "train", "gbdt"])
        .env("MEMELENS_MODEL_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(env_dir.join("gbdt.model").is_file());

    let flag_dir = dir.path().join("from-flag");
    let out = common::command()
        .args(["--config", s(&config), "--model-dir", s(&flag_dir), "train", "gbdt"])
        .env("MEMELENS_MODEL_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(flag_dir.join("gbdt.model").is_file());
}

#[test]
fn serve_exposes_the_review_api() {
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic(dir.path(), 60, 0);
    ok(&["--config", s(&config), "train", "gbdt"]);
    let labels = dir.path().join("labels.jsonl");
    let server = Server::start(&["--config", s(&config), "--labels", s(&labels)]);

    let (status, health) = server.json("GET", "/api/health", None);
    assert_eq!(status, 200);
    assert_eq!(health["items"], 60);
    assert_eq!(health["model"]["kind"], "gbdt");

    let (_, queue) = server.json("GET", "/api/queue", None);
    let id = queue[0]["id"].as_str().unwrap().to_string();
    let (status, bytes) = server.request("GET", &format!("/api/memes/{id}/image"), None);
    assert_eq!(status, 200);
    assert!(bytes.starts_with(b"\x89PNG"));

    let (status, item) = server.json("POST", &format!("/api/memes/{id}/label"), Some(&json!({"label": 1})));
    assert_eq!(status, 200);
    assert_eq!(item["human_label"], 1);
    assert_eq!(std::fs::read_to_string(&labels).unwrap().lines().count(), 1);
}
