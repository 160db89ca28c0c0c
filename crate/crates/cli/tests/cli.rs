use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use valence_transfer::text::{load_jsonl, Label, PolarityLabel};

fn vt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vt"))
        .args(args)
        .env("VT_LOG", "warn")
        .output()
        .expect("vt runs")
}

fn ok(args: &[&str]) -> String {
    let out = vt(args);
    assert!(out.status.success(), "vt {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(args: &[&str], needle: &str) {
    let out = vt(args);
    assert!(!out.status.success(), "vt {args:?} should fail");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(needle), "stderr of vt {args:?} lacks {needle:?}: {err}");
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    fs::write(
        &p,
        "embedding_dim = 6\ngru_units = 4\nmax_epochs = 2\npatience = 1\nfolds = 3\n[synthetic]\nn_source = 120\nn_target = 45\nn_noise = 60\n",
    )
    .unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn selfcheck_passes() {
    let stdout = ok(&["selfcheck"]);
    assert!(stdout.contains("failures: 0"), "{stdout}");
}

#[test]
fn argument_and_path_errors_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    fails_with(&["stats", "--bogus"], "--bogus");
    fails_with(&["stats", "--output", "x.csv"], "no input path given");
    fails_with(&["stats", "--input", "/nonexistent/corpus.jsonl", "--output", "x.csv"], "input path does not exist");
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "sede = 1\n").unwrap();
    fails_with(&["stats", "--config", s(&bad)], "invalid config");
    fails_with(&["stats", "--folds", "1"], "folds must be at least 2");
    fails_with(&["stats", "--format", "xml"], "unknown corpus format");
}

#[test]
fn pipeline_outputs_carry_headers_and_predict_one_word() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_config(d);
    ok(&["synth", "--config", &cfg, "--seed", "3", "--output", s(&d.join("data"))]);
    let weights = d.join("src.vtw");
    let summary = ok(&[
        "train-source",
        "--config",
        &cfg,
        "--seed",
        "3",
        "--format",
        "csv",
        "--input",
        s(&d.join("data/source.csv")),
        "--glove",
        s(&d.join("data/glove.txt")),
        "--output",
        s(&weights),
    ]);
    assert!(summary.contains("\"vocab_size\""));
    let history = fs::read_to_string(d.join("src.history.csv")).unwrap();
    assert!(history.starts_with("# vt "));
    assert!(history.lines().nth(1).unwrap().starts_with("epoch,train_loss"));

    let one = d.join("one.jsonl");
    fs::write(&one, "{\"id\":\"only\",\"text\":\"SP01!\"}\n").unwrap();
    let pred_path = d.join("pred.jsonl");
    ok(&["predict", "--weights", s(&weights), "--input", s(&one), "--output", s(&pred_path)]);
    let text = fs::read_to_string(&pred_path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# vt "));
    let record: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(record["id"], "only");
    assert_eq!(record["tokens"], serde_json::json!(["sp01"]));
    assert_eq!(record["alphas"], serde_json::json!([1.0]));
    let probs = record["probabilities"].as_object().unwrap();
    let total: f64 = probs.values().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-6);

    let eval = d.join("eval");
    let out = ok(&[
        "evaluate",
        "--config",
        &cfg,
        "--input",
        s(&d.join("data/target.jsonl")),
        "--weights",
        s(&weights),
        "--glove",
        s(&d.join("data/glove.txt")),
        "--output",
        s(&eval),
    ]);
    assert!(out.contains("RNN (Full Weight Transfer)"));
    let table = fs::read_to_string(eval.join("table.csv")).unwrap();
    assert!(table.starts_with("# vt "));
    assert_eq!(table.lines().count(), 1 + 1 + 3 + 16);
    for f in ["roc_positive.csv", "roc_negative.csv", "roc_both.csv", "roc_neither.csv", "attention.csv"] {
        assert!(fs::read_to_string(eval.join(f)).unwrap().starts_with("# vt "), "{f}");
    }
}

#[test]
fn evaluate_requires_source_weights() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_config(d);
    ok(&["synth", "--config", &cfg, "--output", s(&d.join("data"))]);
    fails_with(
        &[
            "evaluate",
            "--config",
            &cfg,
            "--input",
            s(&d.join("data/target.jsonl")),
            "--glove",
            s(&d.join("data/glove.txt")),
            "--output",
            s(&d.join("eval")),
        ],
        "no weights path given",
    );
}

#[test]
fn preprocess_stats_and_resolve() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let csv = d.join("tweets.csv");
    fs::write(
        &csv,
        "\"0\",\"1\",\"d\",\"NO_QUERY\",\"u\",\"@bob I HATE mondays http://x.co\"\n\"4\",\"2\",\"d\",\"NO_QUERY\",\"u\",\"Loving it!!\"\n",
    )
    .unwrap();
    let pre = d.join("pre.jsonl");
    ok(&["preprocess", "--format", "csv", "--input", s(&csv), "--output", s(&pre)]);
    let docs = load_jsonl(&pre).unwrap();
    assert_eq!(docs[0].raw_text, "i hate mondays");
    assert_eq!(docs[1].label, Some(Label::Polarity(PolarityLabel::Positive)));

    let hist = d.join("hist.csv");
    let stats = ok(&["stats", "--input", s(&pre), "--output", s(&hist)]);
    assert!(stats.contains("\"documents\": 2"));
    let h = fs::read_to_string(&hist).unwrap();
    let total: usize = h.lines().skip(2).map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 2);

    let votes = d.join("votes.jsonl");
    fs::write(
        &votes,
        concat!(
            "{\"id\":\"a\",\"text\":\"x\",\"annotator_labels\":[\"negative\",\"negative\",\"negative\"]}\n",
            "{\"id\":\"b\",\"text\":\"y\",\"annotator_labels\":[\"positive\",\"positive\",\"negative\"]}\n",
            "{\"id\":\"c\",\"text\":\"z\",\"annotator_labels\":[\"positive\",\"negative\",\"both\"]}\n",
        ),
    )
    .unwrap();
    let resolved = d.join("resolved.jsonl");
    let report = ok(&["resolve", "--input", s(&votes), "--output", s(&resolved)]);
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(report["n_discarded"], 1);
    let kept = load_jsonl(&resolved).unwrap();
    assert_eq!(kept.len(), 2);
    assert_eq!(kept[1].label.unwrap().as_str(), "positive");
}
