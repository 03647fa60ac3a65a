use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mcqa-uq"));
    cmd.env_remove("MCQA_UQ_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Writes a two-model, three-dataset synthetic corpus and returns (items, logits).
fn corpus(root: &Path, n: usize) -> (PathBuf, PathBuf) {
    let spec = json!({
        "seed": 5,
        "datasets": ["MMB", "SB", "AI2D"],
        "models": [
            {"model_id": "alpha-7b", "target_accuracy": 0.75, "sharpness": 0.7, "seed": 1},
            {"model_id": "beta-13b", "target_accuracy": 0.55, "sharpness": 1.2, "seed": 2}
        ]
    });
    let spec_path = root.join("spec.json");
    std::fs::write(&spec_path, spec.to_string()).unwrap();
    let out = root.join("corpus");
    let o = run(&["synth", "--spec", &s(&spec_path), "--n", &n.to_string(), "--out", &s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (out.join("items.jsonl"), out.join("logits.jsonl"))
}

#[test]
fn eval_writes_outputs_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let (items, logits) = corpus(tmp.path(), 400);
    let out = tmp.path().join("run");
    let o = run(&["eval", "--items", &s(&items), "--logits", &s(&logits), "--out", &s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["manifest.json", "cells.json", "metrics.csv", "thresholds.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }

    let manifest: Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["alpha"], json!(0.1));
    assert_eq!(manifest["n_items"], json!(1200));
    let outputs = manifest["outputs"].as_object().unwrap();
    assert!(outputs.contains_key("cells.json"));
    for (name, hash) in outputs {
        let bytes = std::fs::read(out.join(name)).unwrap();
        assert_eq!(hash.as_str().unwrap(), mcqa_uq::evaluation::sha256_hex(&bytes), "{name}");
    }

    let cells: Vec<Value> = serde_json::from_slice(&std::fs::read(out.join("cells.json")).unwrap()).unwrap();
    // 2 models x 3 datasets x (LAC, APS, MEAN)
    assert_eq!(cells.len(), 18);
    let rows = mcqa_uq::metrics::read_csv(std::fs::File::open(out.join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 18);
}

#[test]
fn alpha_out_of_range_is_a_usage_error() {
    let o = run(&["eval", "--items", "i.jsonl", "--logits", "l.jsonl", "--alpha", "1.5", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha"));
}

#[test]
fn missing_logits_name_the_record() {
    let tmp = tempfile::tempdir().unwrap();
    let (items, logits) = corpus(tmp.path(), 30);
    let text = std::fs::read_to_string(&logits).unwrap();
    let dropped: Value = serde_json::from_str(text.lines().nth(7).unwrap()).unwrap();
    let kept: Vec<&str> = text.lines().enumerate().filter(|(i, _)| *i != 7).map(|(_, l)| l).collect();
    std::fs::write(&logits, kept.join("\n") + "\n").unwrap();

    let o = run(&["eval", "--items", &s(&items), "--logits", &s(&logits), "--out", &s(&tmp.path().join("run"))]);
    assert_eq!(o.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains(dropped["item_id"].as_str().unwrap()), "{stderr}");
    assert!(!tmp.path().join("run/cells.json").exists());
}

#[test]
fn sweep_emits_one_mean_row_per_fraction() {
    let tmp = tempfile::tempdir().unwrap();
    let (items, logits) = corpus(tmp.path(), 300);
    let out = tmp.path().join("sweep");
    let o = run(&[
        "sweep", "--items", &s(&items), "--logits", &s(&logits), "--models", "alpha-7b", "--datasets", "MMB",
        "--fractions", "0.1,0.3,0.5", "--out", &s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut reader = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let view = headers.iter().position(|h| h == "score_fn").unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 9);
    assert_eq!(rows.iter().filter(|r| &r[view] == "MEAN").count(), 3);
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn report_renders_every_format() {
    let tmp = tempfile::tempdir().unwrap();
    let (items, logits) = corpus(tmp.path(), 200);
    let out = tmp.path().join("run");
    assert!(run(&["eval", "--items", &s(&items), "--logits", &s(&logits), "--out", &s(&out)]).status.success());
    let cells = s(&out.join("cells.json"));

    let md = run(&["report", "--cells", &cells, "--metric", "uacc", "--format", "md"]);
    assert!(md.status.success());
    let md = String::from_utf8(md.stdout).unwrap();
    assert!(md.contains("| Model | MMB | SB | AI2D | Avg. |"), "{md}");
    assert!(md.contains("| alpha-7b |"));

    let csv_path = tmp.path().join("ss.csv");
    let o = run(&["report", "--cells", &cells, "--view", "lac", "--format", "csv", "--out", &s(&csv_path)]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert!(text.starts_with("model,MMB_value,MMB_rank,"), "{text}");
    assert_eq!(text.lines().count(), 3);

    let json = run(&["report", "--cells", &cells, "--metric", "ece", "--format", "json"]);
    assert!(json.status.success());
    let v: Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);

    let groups = tmp.path().join("groups.json");
    std::fs::write(&groups, json!({"alpha-7b": "small", "beta-13b": "large"}).to_string()).unwrap();
    let o = run(&["report", "--cells", &cells, "--groups", &s(&groups), "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn seed_flag_overrides_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let (items, logits) = corpus(tmp.path(), 200);
    let eval = |dir: &str, env: Option<&str>, flag: Option<&str>| {
        let out = tmp.path().join(dir);
        let mut cmd = bin();
        cmd.args(["eval", "--items", &s(&items), "--logits", &s(&logits), "--out", &s(&out)]);
        if let Some(seed) = flag {
            cmd.args(["--seed", seed]);
        }
        if let Some(seed) = env {
            cmd.env("MCQA_UQ_SEED", seed);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(out.join("cells.json")).unwrap()
    };
    let flag_only = eval("a", None, Some("9"));
    let env_and_flag = eval("b", Some("4"), Some("9"));
    let env_only = eval("c", Some("9"), None);
    let other = eval("d", None, Some("4"));
    assert_eq!(flag_only, env_and_flag);
    assert_eq!(flag_only, env_only);
    assert_ne!(flag_only, other);
}

#[test]
fn prepare_unifies_raw_records() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw.jsonl");
    let records = [
        json!({"item_id": "q1", "question": "Which shape?", "options": ["circle", "square", "triangle"], "answer": 1}),
        json!({"item_id": "q2", "question": "Which color?", "options": ["red", "blue"], "answer": 0}),
    ];
    std::fs::write(&raw, records.iter().map(|r| r.to_string() + "\n").collect::<String>()).unwrap();
    let out = tmp.path().join("mmb.jsonl");
    let o = run(&["prepare", "--dataset", "MMB", "--in", &s(&raw), "--out", &s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let file = std::io::BufReader::new(std::fs::File::open(&out).unwrap());
    let items: Vec<mcqa_uq::data::McqaItem> = mcqa_uq::jsonl::read(file).unwrap();
    assert_eq!(items.len(), 2);
    assert_eq!(items[0].item_id, "q1");
    assert_eq!(items[1].answer, mcqa_uq::data::OptionLabel::A);
}
