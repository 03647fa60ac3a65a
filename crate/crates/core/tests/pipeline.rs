use mcqa_uq::conformal::{calibrate, predict_labels};
use mcqa_uq::evaluation::{run, RunConfig};
use mcqa_uq::metrics::{ece_mce, ScoreView};
use mcqa_uq::scoring::{LogitRecord, ScoreFn};
use mcqa_uq::synthetic::{generate, generate_corpus, sample, SyntheticCorpusSpec, SyntheticModelSpec};

#[test]
fn calibrated_generator_has_low_ece() {
    let spec = SyntheticModelSpec::calibrated("cal", 0.65, 1.0, 31);
    let draws = sample(&spec, 50_000, 0).unwrap();
    let (ece, _) = ece_mce(&draws, 10).unwrap();
    assert!(ece < 2.0, "ECE {ece}");
}

#[test]
fn miscalibration_raises_ece() {
    let calibrated = SyntheticModelSpec::calibrated("cal", 0.65, 1.0, 31);
    let overconfident = SyntheticModelSpec {
        miscalibration: 0.5,
        ..calibrated.clone()
    };
    let (good, _) = ece_mce(&sample(&calibrated, 20_000, 0).unwrap(), 10).unwrap();
    let (bad, _) = ece_mce(&sample(&overconfident, 20_000, 0).unwrap(), 10).unwrap();
    assert!(bad > good + 5.0, "{bad} vs {good}");
}

#[test]
fn sharp_models_get_singleton_lac_sets() {
    let spec = SyntheticModelSpec::calibrated("sharp", 0.95, 1e6, 8);
    let corpus = generate(&spec, 4000).unwrap();
    let config = RunConfig {
        score_fns: vec![ScoreFn::Lac],
        ..RunConfig::default()
    };
    let cells = run(&config, &corpus.items, &corpus.logits).unwrap();
    let lac = cells.iter().find(|c| c.score_fn == ScoreView::Lac).unwrap();
    assert!((lac.metrics.ss - 1.0).abs() < 0.05, "SS {}", lac.metrics.ss);
}

#[test]
fn coverage_at_matched_split_sizes() {
    let spec = SyntheticModelSpec::calibrated("m", 0.6, 1.0, 12);
    let draws = sample(&spec, 10_000, 3).unwrap();
    let (cal, test) = draws.split_at(5000);
    for score_fn in ScoreFn::ALL {
        let scores: Vec<f64> = cal.iter().map(|(p, y)| score_fn.score(p, *y)).collect();
        let t = calibrate(&scores, 0.1, score_fn).unwrap();
        let covered = test.iter().filter(|(p, y)| predict_labels(p, &t).contains(*y)).count();
        let pct = 100.0 * covered as f64 / test.len() as f64;
        assert!((88.0..=92.0).contains(&pct), "{score_fn}: {pct}");
    }
}

#[test]
fn multi_model_mean_coverage() {
    let spec: SyntheticCorpusSpec = serde_json::from_value(serde_json::json!({
        "seed": 21,
        "datasets": ["MMB", "OOD", "SQA", "SB", "AI2D"],
        "models": [
            {"model_id": "a", "target_accuracy": 0.8, "sharpness": 0.6, "seed": 1},
            {"model_id": "b", "target_accuracy": 0.5, "sharpness": 1.0, "seed": 2},
            {"model_id": "c", "target_accuracy": 0.65, "sharpness": 2.0, "miscalibration": 0.7, "seed": 3}
        ]
    }))
    .unwrap();
    let corpus = generate_corpus(&spec, 3000).unwrap();
    let cells = run(&RunConfig::default(), &corpus.items, &corpus.logits).unwrap();
    assert_eq!(cells.len(), 3 * 5 * 3);
    for cell in cells.iter().filter(|c| c.score_fn == ScoreView::Mean) {
        assert!(cell.metrics.coverage_pct >= 88.0, "{} {}: {}", cell.model_id, cell.dataset_id, cell.metrics.coverage_pct);
        assert_eq!(cell.metrics.n_test, 1500);
    }
}

#[test]
fn logit_records_match_the_capture_schema() {
    let line = r#"{"item_id":"mmb-1","model_id":"m","logits":[1.5,-0.25,0.0,2.0,-3.0,-3.5]}"#;
    let rec: LogitRecord = serde_json::from_str(line).unwrap();
    assert_eq!(rec.logits[3], 2.0);
    assert_eq!(serde_json::to_string(&rec).unwrap(), line);
    assert!(serde_json::from_str::<LogitRecord>(r#"{"item_id":"x","model_id":"m","logits":[1,2,3,4]}"#).is_err());
}
